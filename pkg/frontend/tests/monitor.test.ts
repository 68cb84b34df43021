import { describe, expect, it } from "vitest";
import {
  RTT_BUDGET_MS,
  RTT_CRITICAL_MS,
  RTT_WARN_MS,
  STALE_AFTER_MS,
  rttHealth,
} from "../src/monitor.js";

describe("rttHealth", () => {
  it("exposes the documented thresholds", () => {
    expect(RTT_BUDGET_MS).toBe(100);
    expect(RTT_CRITICAL_MS).toBe(150);
    expect(RTT_WARN_MS).toBe(85);
    expect(STALE_AFTER_MS).toBe(5000);
  });

  it("colors a comfortable RTT green", () => {
    expect(rttHealth(50, 0)).toEqual({ status: "green", critical: false });
    expect(rttHealth(84.9, 1000)).toEqual({ status: "green", critical: false });
  });

  it("warns amber inside the budget from 85 ms up", () => {
    expect(rttHealth(85, 0)).toEqual({ status: "amber", critical: false });
    expect(rttHealth(90, 0)).toEqual({ status: "amber", critical: false });
    expect(rttHealth(100, 0)).toEqual({ status: "amber", critical: false });
  });

  it("colors 120 ms red: the 100 ms round-trip budget is exceeded", () => {
    expect(rttHealth(120, 0)).toEqual({ status: "red", critical: false });
    expect(rttHealth(100.1, 0).status).toBe("red");
  });

  it("flags red rows critical at 150 ms and above", () => {
    expect(rttHealth(150, 0)).toEqual({ status: "red", critical: true });
    expect(rttHealth(160, 0)).toEqual({ status: "red", critical: true });
    expect(rttHealth(149.9, 0)).toEqual({ status: "red", critical: false });
  });

  it("greys out rows with stale or missing stats", () => {
    expect(rttHealth(50, 6000)).toEqual({ status: "grey", critical: false });
    expect(rttHealth(null, 0)).toEqual({ status: "grey", critical: false });
    expect(rttHealth(120, Number.POSITIVE_INFINITY).status).toBe("grey");
    // exactly at the stale boundary the last sample still counts
    expect(rttHealth(50, 5000).status).toBe("green");
  });
});
