/**
 * Trend chart: page through the data API, fold client-side, plot as SVG.
 *
 * The fold is the only computation the chart performs: group rows by the
 * x attribute, sum the y attribute per group, order by x ascending. Null
 * x or y values are dropped. Everything else comes straight off the API.
 */

import type { ApiClient, Scalar } from "./api.js";

export type SeriesPoint = [Scalar, number];

function compareX(a: Scalar, b: Scalar): number {
  // within one attribute all non-null values share a type, so < is total
  if (a === b) {
    return 0;
  }
  return (a as string | number | boolean) < (b as string | number | boolean) ? -1 : 1;
}

export function foldSeries(
  rows: Record<string, Scalar>[],
  xAttribute: string,
  yAttribute: string,
): SeriesPoint[] {
  const sums = new Map<Scalar, number>();
  for (const row of rows) {
    const x = row[xAttribute] ?? null;
    const y = row[yAttribute] ?? null;
    if (x === null || y === null) {
      continue;
    }
    sums.set(x, (sums.get(x) ?? 0) + (y as number));
  }
  return [...sums.entries()].sort((a, b) => compareX(a[0], b[0]));
}

export interface ChartQuery {
  xAttribute: string;
  yAttribute: string;
  filters: string[];
  pageSize?: number;
}

/** Fetch every matching record page by page and fold it into a series. */
export async function chartSeries(
  api: ApiClient,
  datasetId: string,
  query: ChartQuery,
): Promise<SeriesPoint[]> {
  const rows = await api.fetchAllPages(
    datasetId,
    {
      filters: query.filters,
      sort: [`${query.xAttribute}:asc`],
    },
    query.pageSize ?? 100,
  );
  return foldSeries(rows, query.xAttribute, query.yAttribute);
}

// --- SVG rendering ------------------------------------------------------------

export interface PlotGeometry {
  width: number;
  height: number;
  padding: number;
}

/** Map a series onto polyline points for an SVG of the given geometry. */
export function plotPoints(
  series: SeriesPoint[],
  geometry: PlotGeometry,
): { x: number; y: number; label: string; value: number }[] {
  if (series.length === 0) {
    return [];
  }
  const values = series.map(([, y]) => y);
  const lo = Math.min(...values, 0);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const innerWidth = geometry.width - 2 * geometry.padding;
  const innerHeight = geometry.height - 2 * geometry.padding;
  const step = series.length > 1 ? innerWidth / (series.length - 1) : 0;
  return series.map(([x, y], i) => ({
    x: geometry.padding + (series.length > 1 ? i * step : innerWidth / 2),
    y: geometry.padding + innerHeight * (1 - (y - lo) / span),
    label: String(x),
    value: y,
  }));
}
