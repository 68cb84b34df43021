/**
 * RTT health coloring for the monitor view.
 *
 * The session budget is 100 ms round-trip: anything above it is red
 * (budget exceeded), with 150 ms and up flagged critical.  The amber band
 * warns while still inside the budget; rows with no stats for more than
 * 5 s are stale and grey out.
 */

export const RTT_BUDGET_MS = 100;
export const RTT_CRITICAL_MS = 150;
export const RTT_WARN_MS = 85;
export const STALE_AFTER_MS = 5000;

export type RttStatus = "green" | "amber" | "red" | "grey";

export interface RttHealth {
  status: RttStatus;
  critical: boolean;
}

export function rttHealth(
  rttMs: number | null,
  lastStatsAgeMs: number,
): RttHealth {
  if (lastStatsAgeMs > STALE_AFTER_MS || rttMs === null) {
    return { status: "grey", critical: false };
  }
  if (rttMs > RTT_BUDGET_MS) {
    return { status: "red", critical: rttMs >= RTT_CRITICAL_MS };
  }
  if (rttMs >= RTT_WARN_MS) {
    return { status: "amber", critical: false };
  }
  return { status: "green", critical: false };
}
