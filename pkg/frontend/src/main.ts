/**
 * Page entry point: one socket, one store, serialized UI updates.
 *
 * The page is stateless across reloads: everything on screen is rebuilt
 * from the snapshot the server sends after console_hello.
 */

import { ConsoleConnection } from "./connection.js";
import { ConsoleStore } from "./state.js";
import { renderBanner, renderFaders, renderMonitor, showToast } from "./ui.js";

function wsUrl(): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

export function startConsole(): void {
  const store = new ConsoleStore();
  const faderRoot = document.getElementById("faders")!;
  const monitorRoot = document.getElementById("monitor")!;
  const bannerRoot = document.getElementById("banner")!;
  const toastRoot = document.getElementById("toasts")!;

  const params = new URLSearchParams(location.search);
  const asClient = params.get("client");
  const boundId = asClient === null ? null : Number(asClient);

  const redraw = () => {
    renderFaders(faderRoot, store.faderGroups(), {
      onFader: (sourceId, gain) => {
        connection.send(store.setFader(sourceId, gain));
        redraw(); // show the pending marker until the echo lands
      },
    });
    renderMonitor(monitorRoot, store.monitorGroups(Date.now()));
  };

  const connection = new ConsoleConnection({
    url: wsUrl(),
    socketFactory: (url) => new WebSocket(url),
    helloFactory: () => store.hello(boundId),
    onStatus: (status) => {
      store.connection = status;
      renderBanner(bannerRoot, status);
    },
    onMessage: (msg) => {
      store.applyServer(msg, Date.now());
      let toast = store.popToast();
      while (toast !== undefined) {
        showToast(toastRoot, toast);
        toast = store.popToast();
      }
      redraw();
    },
  });
  connection.connect();
  // Stale detection is time-driven, not message-driven.
  setInterval(() => renderMonitor(monitorRoot, store.monitorGroups(Date.now())),
    1000);
}

startConsole();
