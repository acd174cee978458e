/** Chart-option builders: pure functions from parsed rows to echarts options. */

import { z } from "zod";
import type { Row } from "./schema.js";

export const StyleSchema = z
  .object({
    width: z.number().int().positive().default(840),
    height: z.number().int().positive().default(520),
    title: z.string().optional(),
    logScale: z.boolean().default(false),
  })
  .strict();

export type Style = z.infer<typeof StyleSchema>;

export const FIGURE_KINDS = ["convergence", "cdf", "gdop-heatmap", "sweep-line"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
];

function methods(rows: Row[]): string[] {
  return [...new Set(rows.map((r) => r.method))].sort();
}

function numeric(rows: Row[], col: string): Row[] {
  return rows.filter((r) => r[col] !== "" && Number.isFinite(Number(r[col])));
}

function rms(values: number[]): number {
  const s = values.reduce((acc, v) => acc + v * v, 0);
  return Math.sqrt(s / values.length);
}

const BASE = {
  animation: false,
  backgroundColor: "#ffffff",
  textStyle: { fontFamily: "sans-serif" },
  color: PALETTE,
};

/** Mean tracking error per slot, one line per method. */
export function convergenceOption(rows: Row[], style: Style) {
  const data = numeric(rows, "rmse");
  if (data.length === 0) throw new Error("no plottable rows");
  const names = methods(data);
  const slots = [...new Set(data.map((r) => Number(r.slot)))].sort((a, b) => a - b);
  const series = names.map((m) => {
    const pts = slots.map((t) => {
      const vals = data
        .filter((r) => r.method === m && Number(r.slot) === t)
        .map((r) => Number(r.rmse));
      return [t, rms(vals)];
    });
    return { name: m, type: "line" as const, showSymbol: true, symbolSize: 5, data: pts };
  });
  return {
    ...BASE,
    title: { text: style.title ?? "Tracking error over slots", left: "center" },
    legend: { data: names, bottom: 0 },
    grid: { left: 70, right: 30, top: 50, bottom: 60 },
    xAxis: { type: "value", name: "slot", nameLocation: "middle", nameGap: 28 },
    yAxis: {
      type: style.logScale ? "log" : "value",
      name: "RMSE (m)",
      nameLocation: "middle",
      nameGap: 45,
    },
    series,
  };
}

/** Empirical distribution of per-slot errors, one step line per method. */
export function cdfOption(rows: Row[], style: Style) {
  const data = numeric(rows, "rmse");
  if (data.length === 0) throw new Error("no plottable rows");
  const names = methods(data);
  const series = names.map((m) => {
    const vals = data
      .filter((r) => r.method === m)
      .map((r) => Number(r.rmse))
      .sort((a, b) => a - b);
    const pts = vals.map((v, i) => [v, (i + 1) / vals.length]);
    return { name: m, type: "line" as const, step: "end" as const, showSymbol: false, data: pts };
  });
  return {
    ...BASE,
    title: { text: style.title ?? "RMSE distribution", left: "center" },
    legend: { data: names, bottom: 0 },
    grid: { left: 70, right: 30, top: 50, bottom: 60 },
    xAxis: {
      type: style.logScale ? "log" : "value",
      name: "RMSE (m)",
      nameLocation: "middle",
      nameGap: 28,
    },
    yAxis: { type: "value", name: "CDF", min: 0, max: 1, nameLocation: "middle", nameGap: 45 },
    series,
  };
}

/** Aggregate error against the swept parameter, one line per method. */
export function sweepLineOption(rows: Row[], style: Style) {
  const data = numeric(rows, "rmse").filter((r) => r.sweep_value !== "");
  if (data.length === 0) throw new Error("no plottable rows with sweep values");
  const names = methods(data);
  const axis = data[0].sweep_axis || "sweep";
  const xs = [...new Set(data.map((r) => Number(r.sweep_value)))].sort((a, b) => a - b);
  const series = names.map((m) => ({
    name: m,
    type: "line" as const,
    showSymbol: true,
    symbolSize: 6,
    data: xs.map((x) => {
      const vals = data
        .filter((r) => r.method === m && Number(r.sweep_value) === x)
        .map((r) => Number(r.rmse));
      return [x, rms(vals)];
    }),
  }));
  return {
    ...BASE,
    title: { text: style.title ?? `RMSE versus ${axis}`, left: "center" },
    legend: { data: names, bottom: 0 },
    grid: { left: 70, right: 30, top: 50, bottom: 60 },
    xAxis: { type: "category", name: axis, nameLocation: "middle", nameGap: 28, data: xs },
    yAxis: {
      type: style.logScale ? "log" : "value",
      name: "RMSE (m)",
      nameLocation: "middle",
      nameGap: 45,
    },
    series,
  };
}

/** One heatmap panel per deployment over the evaluation raster. */
export function gdopHeatmapOption(rows: Row[], style: Style) {
  const data = numeric(rows, "gdop");
  if (data.length === 0) throw new Error("no plottable rows");
  const deployments = [...new Set(data.map((r) => r.deployment))].sort();
  const xs = [...new Set(data.map((r) => Number(r.x)))].sort((a, b) => a - b);
  const ys = [...new Set(data.map((r) => Number(r.y)))].sort((a, b) => a - b);
  const finite = data.map((r) => Number(r.gdop)).filter((v) => Number.isFinite(v));
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  const grids: object[] = [];
  const xAxes: object[] = [];
  const yAxes: object[] = [];
  const series: object[] = [];
  const panelWidth = 84 / deployments.length;
  deployments.forEach((dep, i) => {
    grids.push({
      left: `${8 + i * panelWidth}%`,
      width: `${panelWidth - 4}%`,
      top: 60,
      bottom: 80,
    });
    xAxes.push({
      gridIndex: i,
      type: "category",
      data: xs,
      name: i === 0 ? "x (m)" : "",
      axisLabel: { interval: Math.max(1, Math.floor(xs.length / 5)) },
    });
    yAxes.push({
      gridIndex: i,
      type: "category",
      data: ys,
      name: i === 0 ? "y (m)" : "",
      axisLabel: { show: i === 0 },
    });
    const pts = data
      .filter((r) => r.deployment === dep)
      .map((r) => [
        xs.indexOf(Number(r.x)),
        ys.indexOf(Number(r.y)),
        Number.isFinite(Number(r.gdop)) ? Math.log10(Number(r.gdop)) : null,
      ]);
    series.push({
      name: dep,
      type: "heatmap",
      xAxisIndex: i,
      yAxisIndex: i,
      data: pts,
      progressive: 0,
    });
  });
  return {
    ...BASE,
    title: [
      { text: style.title ?? "GDOP over the evaluation area", left: "center" },
      ...deployments.map((dep, i) => ({
        text: dep,
        textStyle: { fontSize: 12 },
        left: `${8 + i * panelWidth + (panelWidth - 4) / 2}%`,
        top: 34,
        textAlign: "center" as const,
      })),
    ],
    grid: grids,
    xAxis: xAxes,
    yAxis: yAxes,
    visualMap: {
      min: Math.log10(lo),
      max: Math.log10(hi),
      calculable: false,
      orient: "horizontal",
      left: "center",
      bottom: 8,
      text: ["log10 GDOP high", "low"],
      inRange: { color: ["#15308a", "#3b7cc4", "#7fcdbb", "#f7fcb9", "#d7301f"] },
    },
    series,
  };
}

export function buildOption(kind: FigureKind, rows: Row[], style: Style) {
  switch (kind) {
    case "convergence":
      return convergenceOption(rows, style);
    case "cdf":
      return cdfOption(rows, style);
    case "sweep-line":
      return sweepLineOption(rows, style);
    case "gdop-heatmap":
      return gdopHeatmapOption(rows, style);
  }
}
