/**
 * DOM rendering of the fader board and the latency monitor.
 *
 * Pure view layer: everything shown comes from ConsoleStore view models;
 * every interaction calls back with exactly one intent.
 */

import { FaderRow, MonitorRow, SectionGroup } from "./state.js";
import { GAIN_MAX } from "./protocol.js";

export interface UiCallbacks {
  onFader(sourceId: number, gain: number): void;
}

export function renderFaders(
  root: HTMLElement,
  groups: SectionGroup<FaderRow>[],
  callbacks: UiCallbacks,
): void {
  root.textContent = "";
  for (const group of groups) {
    const fieldset = document.createElement("fieldset");
    fieldset.className = `section section-${group.section}`;
    const legend = document.createElement("legend");
    legend.textContent = group.section;
    fieldset.appendChild(legend);
    for (const row of group.rows) {
      fieldset.appendChild(renderFaderRow(row, callbacks));
    }
    root.appendChild(fieldset);
  }
}

function renderFaderRow(row: FaderRow, callbacks: UiCallbacks): HTMLElement {
  const div = document.createElement("div");
  div.className = "fader-row" + (row.muted ? " muted" : "") +
    (row.pending ? " pending" : "");
  div.dataset.sourceId = String(row.sourceId);

  const label = document.createElement("span");
  label.className = "name";
  label.textContent = row.name;
  div.appendChild(label);

  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.max = String(GAIN_MAX);
  slider.step = "0.01";
  slider.value = row.gain === null ? "0" : String(row.gain);
  slider.disabled = row.gain === null;
  slider.addEventListener("change", () => {
    callbacks.onFader(row.sourceId, Number(slider.value));
  });
  div.appendChild(slider);

  const db = document.createElement("span");
  db.className = "db";
  db.textContent = row.dbLabel;
  div.appendChild(db);
  return div;
}

export function renderMonitor(
  root: HTMLElement,
  groups: SectionGroup<MonitorRow>[],
): void {
  root.textContent = "";
  for (const group of groups) {
    for (const row of group.rows) {
      const div = document.createElement("div");
      div.className = `monitor-row rtt-${row.health.status}` +
        (row.health.critical ? " critical" : "");
      div.dataset.clientId = String(row.clientId);
      const rtt = row.rttMs === null ? "—" : `${row.rttMs.toFixed(1)} ms`;
      div.textContent =
        `${row.name} (${row.section})  rtt ${rtt}  ` +
        `lost ${row.lost}  concealed ${row.concealed}`;
      root.appendChild(div);
    }
  }
}

export function renderBanner(root: HTMLElement, status: string): void {
  root.className = `banner banner-${status}`;
  root.textContent = status === "open"
    ? "connected"
    : status === "connecting"
      ? "connecting…"
      : "connection lost — retrying";
}

export function showToast(root: HTMLElement, text: string): void {
  const div = document.createElement("div");
  div.className = "toast";
  div.textContent = text;
  root.appendChild(div);
  setTimeout(() => div.remove(), 4000);
}
