/**
 * Trajectory envelope view over a downloaded trial log: per-phase mean path
 * and outer range band in the x-z front plane, one hue per phase.
 */

export interface LogRecord {
  trial_id: string;
  condition: string;
  outcome: string;
  trajectory: number[][]; // rows [t, x, y, z, qw, qx, qy, qz]
  phase_bounds: { name: string; t_start: number; t_end: number | null; complete: boolean }[];
}

export interface EnvelopeBand {
  phase: string;
  color: string;
  nTrials: number;
  // per-station [x, z]
  mean: [number, number][];
  lo: [number, number][];
  hi: [number, number][];
}

export const PHASE_COLORS: Record<string, string> = {
  Reach: "#1f77b4",
  Relocation: "#ff7f0e",
  Return: "#2ca02c",
};

export function parseLog(text: string): LogRecord[] {
  const records: LogRecord[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    try {
      records.push(JSON.parse(trimmed) as LogRecord);
    } catch {
      // damaged line: skip, keep the rest of the log usable
    }
  }
  return records;
}

function slicePhase(rec: LogRecord, phase: string): [number, number][] | null {
  const bound = rec.phase_bounds.find((b) => b.name === phase);
  if (!bound || !bound.complete || bound.t_end === null) return null;
  const pts: [number, number][] = [];
  for (const row of rec.trajectory) {
    if (row[0] >= bound.t_start && row[0] <= bound.t_end) {
      pts.push([row[1], row[3]]); // x-z plane
    }
  }
  return pts.length >= 2 ? pts : null;
}

/** Resample a polyline to `bins` stations equally spaced in arc length. */
export function resampleByArcLength(
  pts: [number, number][],
  bins: number,
): [number, number][] {
  const cum = [0];
  for (let i = 1; i < pts.length; i++) {
    const dx = pts[i][0] - pts[i - 1][0];
    const dz = pts[i][1] - pts[i - 1][1];
    cum.push(cum[i - 1] + Math.hypot(dx, dz));
  }
  const total = cum[cum.length - 1];
  if (total === 0) return Array.from({ length: bins }, () => [...pts[0]] as [number, number]);
  const out: [number, number][] = [];
  let j = 0;
  for (let b = 0; b < bins; b++) {
    const s = (b / (bins - 1)) * total;
    while (j < cum.length - 2 && cum[j + 1] < s) j++;
    const span = cum[j + 1] - cum[j];
    const u = span > 0 ? (s - cum[j]) / span : 0;
    out.push([
      pts[j][0] + u * (pts[j + 1][0] - pts[j][0]),
      pts[j][1] + u * (pts[j + 1][1] - pts[j][1]),
    ]);
  }
  return out;
}

export function envelopeForPhase(
  records: LogRecord[],
  phase: string,
  bins = 50,
): EnvelopeBand | null {
  const paths: [number, number][][] = [];
  for (const rec of records) {
    if (rec.outcome !== "Success") continue;
    const pts = slicePhase(rec, phase);
    if (pts) paths.push(resampleByArcLength(pts, bins));
  }
  if (paths.length === 0) return null;
  const mean: [number, number][] = [];
  const lo: [number, number][] = [];
  const hi: [number, number][] = [];
  for (let b = 0; b < bins; b++) {
    let mx = 0;
    let mz = 0;
    let lox = Infinity;
    let loz = Infinity;
    let hix = -Infinity;
    let hiz = -Infinity;
    for (const p of paths) {
      mx += p[b][0];
      mz += p[b][1];
      lox = Math.min(lox, p[b][0]);
      loz = Math.min(loz, p[b][1]);
      hix = Math.max(hix, p[b][0]);
      hiz = Math.max(hiz, p[b][1]);
    }
    mean.push([mx / paths.length, mz / paths.length]);
    lo.push([lox, loz]);
    hi.push([hix, hiz]);
  }
  return {
    phase,
    color: PHASE_COLORS[phase] ?? "#7f7f7f",
    nTrials: paths.length,
    mean,
    lo,
    hi,
  };
}

export interface EnvelopePanel {
  condition: string;
  bands: EnvelopeBand[];
}

/** One panel per condition, side by side, each with all phases present. */
export function buildPanels(records: LogRecord[], bins = 50): EnvelopePanel[] {
  if (records.length === 0) throw new Error("empty log");
  const byCondition = new Map<string, LogRecord[]>();
  for (const rec of records) {
    const group = byCondition.get(rec.condition) ?? [];
    group.push(rec);
    byCondition.set(rec.condition, group);
  }
  const panels: EnvelopePanel[] = [];
  for (const [condition, group] of [...byCondition.entries()].sort()) {
    const phases = [...new Set(group.flatMap((r) => r.phase_bounds.map((b) => b.name)))];
    const bands = phases
      .map((phase) => envelopeForPhase(group, phase, bins))
      .filter((b): b is EnvelopeBand => b !== null);
    panels.push({ condition, bands });
  }
  return panels;
}

/** Largest band width across stations — collapses to 0 for a single trial. */
export function maxBandWidth(band: EnvelopeBand): number {
  let worst = 0;
  for (let b = 0; b < band.mean.length; b++) {
    worst = Math.max(
      worst,
      Math.hypot(band.hi[b][0] - band.lo[b][0], band.hi[b][1] - band.lo[b][1]),
    );
  }
  return worst;
}
