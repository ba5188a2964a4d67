// Posterior interval plot: one horizontal glyph per dose.
//
// Each glyph draws the 95% equi-tailed credible interval as a thin line, the
// 50% interval as a thick line, and the posterior median as a point.  Dashed
// vertical guides mark the targeted-toxicity band.  The x axis is DLT
// probability on [0, 1]; every coordinate is a linear map of a server-sent
// number, and the raw values are stamped on each glyph as data attributes.

import type { DoseRow, PosteriorResponse } from "./types.js";

export interface PlotLayout {
  width: number;
  rowHeight: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_LAYOUT: PlotLayout = {
  width: 640,
  rowHeight: 34,
  padLeft: 110,
  padRight: 16,
  padTop: 26,
  padBottom: 46,
};

/** Map a probability to an x pixel coordinate. */
export function xScale(p: number, layout: PlotLayout = DEFAULT_LAYOUT): number {
  const span = layout.width - layout.padLeft - layout.padRight;
  return layout.padLeft + p * span;
}

function fmtCoord(v: number): string {
  return String(Math.round(v * 100) / 100);
}

function glyph(row: DoseRow, y: number, cls: string, layout: PlotLayout): string {
  const [lo95, hi95] = row.ci95;
  const [lo50, hi50] = row.ci50;
  const label = cls === "reference"
    ? `${row.dose} ref`
    : `${row.dose} mg / ${row.interval} h`;
  return `
  <g class="dose-glyph ${cls}" data-dose="${row.dose}" data-median="${row.median}"
     data-ci50="${lo50},${hi50}" data-ci95="${lo95},${hi95}" data-p-od="${row.p_od}">
    <text class="dose-label" x="${layout.padLeft - 8}" y="${fmtCoord(y + 4)}" text-anchor="end">${label}</text>
    <line class="ci95" x1="${fmtCoord(xScale(lo95, layout))}" x2="${fmtCoord(xScale(hi95, layout))}"
          y1="${fmtCoord(y)}" y2="${fmtCoord(y)}" stroke-width="1.5"/>
    <line class="ci50" x1="${fmtCoord(xScale(lo50, layout))}" x2="${fmtCoord(xScale(hi50, layout))}"
          y1="${fmtCoord(y)}" y2="${fmtCoord(y)}" stroke-width="5"/>
    <circle class="median" cx="${fmtCoord(xScale(row.median, layout))}" cy="${fmtCoord(y)}" r="3.5"/>
  </g>`;
}

/**
 * Render the interval plot for a posterior response.
 *
 * `target` is the targeted-toxicity band from the trial configuration
 * (dashed guides); panel doses are drawn top-to-bottom in server order with
 * the reference regimen as the last row.
 */
export function renderIntervalPlot(
  posterior: PosteriorResponse,
  target: [number, number],
  layout: PlotLayout = DEFAULT_LAYOUT,
): string {
  const rows = posterior.doses;
  const nRows = rows.length + 1; // + reference
  const height = layout.padTop + nRows * layout.rowHeight + layout.padBottom;
  const yOf = (i: number): number => layout.padTop + (i + 0.5) * layout.rowHeight;
  const axisY = layout.padTop + nRows * layout.rowHeight + 8;

  const guides = target
    .map((t) => `
  <line class="target-guide" data-target="${t}" x1="${fmtCoord(xScale(t, layout))}" x2="${fmtCoord(xScale(t, layout))}"
        y1="${layout.padTop - 8}" y2="${fmtCoord(axisY - 4)}" stroke-dasharray="5,4"/>
  <text class="target-label" x="${fmtCoord(xScale(t, layout))}" y="${layout.padTop - 12}" text-anchor="middle">${t}</text>`)
    .join("");

  const ticks = [0, 0.2, 0.4, 0.6, 0.8, 1]
    .map((t) => `
  <line class="tick" x1="${fmtCoord(xScale(t, layout))}" x2="${fmtCoord(xScale(t, layout))}"
        y1="${fmtCoord(axisY - 4)}" y2="${fmtCoord(axisY)}"/>
  <text class="tick-label" x="${fmtCoord(xScale(t, layout))}" y="${fmtCoord(axisY + 14)}" text-anchor="middle">${t}</text>`)
    .join("");

  const glyphs = rows.map((row, i) => glyph(row, yOf(i), "panel", layout)).join("");
  const refGlyph = glyph(posterior.reference, yOf(rows.length), "reference", layout);

  return `<svg class="interval-plot" viewBox="0 0 ${layout.width} ${height}" role="img"
     aria-label="Per-dose DLT probability intervals">
  <line class="axis" x1="${fmtCoord(xScale(0, layout))}" x2="${fmtCoord(xScale(1, layout))}"
        y1="${fmtCoord(axisY)}" y2="${fmtCoord(axisY)}"/>
  <text class="axis-title" x="${fmtCoord(xScale(0.5, layout))}" y="${fmtCoord(axisY + 28)}" text-anchor="middle">P(DLT in first cycle)</text>${guides}${ticks}${glyphs}${refGlyph}
</svg>`;
}
