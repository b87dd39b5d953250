/**
 * Rule-editor support: draft model, client-side validation, the debounced
 * live-preview loop, and the preview table view-model.
 *
 * The preview table performs no computation of its own. Every cell, flag
 * and banner is lifted verbatim from the service's report, so what the
 * editor shows is exactly what ingestion will do.
 */

import type { PreviewReport, Scalar, Schema } from "./api.js";

// --- draft model ------------------------------------------------------------

export type ChoiceMode = "map" | "date" | "constant";

export interface AttributeChoice {
  mode: ChoiceMode;
  /** column header text, or a zero-based column index for headerless files */
  source?: string | number;
  pattern?: string;
  value?: string;
}

export interface FilterChoice {
  column: string | number;
  op: string;
  operand?: string;
}

export interface RuleDraft {
  headerRow: number | null;
  attributes: Record<string, AttributeChoice>;
  filters: FilterChoice[];
  skip: number;
}

export function emptyDraft(): RuleDraft {
  return { headerRow: 0, attributes: {}, filters: [], skip: 0 };
}

/** Serialize a draft to the rule-generation request body. */
export function draftToBody(draft: RuleDraft): Record<string, unknown> {
  const attributes: Record<string, unknown> = {};
  for (const [name, choice] of Object.entries(draft.attributes)) {
    const entry: Record<string, unknown> = { mode: choice.mode };
    if (choice.source !== undefined && choice.source !== "") {
      entry["source"] = choice.source;
    }
    if (choice.pattern !== undefined && choice.pattern !== "") {
      entry["pattern"] = choice.pattern;
    }
    if (choice.value !== undefined) {
      entry["value"] = choice.value;
    }
    attributes[name] = entry;
  }
  const body: Record<string, unknown> = {
    header_row: draft.headerRow,
    attributes,
  };
  if (draft.filters.length > 0) {
    body["filters"] = draft.filters.map((f) =>
      f.op === "not_empty"
        ? { column: f.column, op: f.op }
        : { column: f.column, op: f.op, operand: f.operand ?? "" },
    );
  }
  if (draft.skip > 0) {
    body["skip"] = draft.skip;
  }
  return body;
}

/** Inverse of draftToBody; round trips any body draftToBody produced. */
export function draftFromBody(body: Record<string, unknown>): RuleDraft {
  const attributes: Record<string, AttributeChoice> = {};
  const rawAttributes = (body["attributes"] ?? {}) as Record<
    string,
    Record<string, unknown>
  >;
  for (const [name, entry] of Object.entries(rawAttributes)) {
    const choice: AttributeChoice = { mode: entry["mode"] as ChoiceMode };
    if (entry["source"] !== undefined) {
      choice.source = entry["source"] as string | number;
    }
    if (entry["pattern"] !== undefined) {
      choice.pattern = entry["pattern"] as string;
    }
    if (entry["value"] !== undefined) {
      choice.value = entry["value"] as string;
    }
    attributes[name] = choice;
  }
  const rawFilters = (body["filters"] ?? []) as Record<string, unknown>[];
  return {
    headerRow: (body["header_row"] ?? null) as number | null,
    attributes,
    filters: rawFilters.map((f) => {
      const filter: FilterChoice = {
        column: f["column"] as string | number,
        op: f["op"] as string,
      };
      if (f["operand"] !== undefined) {
        filter.operand = f["operand"] as string;
      }
      return filter;
    }),
    skip: (body["skip"] ?? 0) as number,
  };
}

/** Problems that make a draft unsendable; checked before any request. */
export function validateDraft(draft: RuleDraft): string[] {
  const problems: string[] = [];
  for (const [name, choice] of Object.entries(draft.attributes)) {
    if (choice.mode === "date" && choice.pattern === "") {
      problems.push(`${name}: date pattern must not be empty (clear it to use ISO)`);
    }
    if (choice.mode !== "constant" && (choice.source === undefined || choice.source === "")) {
      problems.push(`${name}: pick a source column`);
    }
    if (choice.mode === "constant" && choice.value === undefined) {
      problems.push(`${name}: constant mode needs a value`);
    }
  }
  for (const filter of draft.filters) {
    if (filter.column === undefined || filter.column === "") {
      problems.push("row filter: pick a column");
    }
    if (filter.op !== "not_empty" && (filter.operand === undefined || filter.operand === "")) {
      problems.push(`row filter: operator ${filter.op} needs an operand`);
    }
  }
  if (draft.skip < 0) {
    problems.push("skip count must be >= 0");
  }
  return problems;
}

// --- debounced preview loop ---------------------------------------------------

export interface SchedulerCallbacks {
  onReport: (report: PreviewReport) => void;
  onInvalid: (problems: string[]) => void;
  onError?: (error: unknown) => void;
}

/**
 * Debounces edits into preview requests, one per quiet period. Responses
 * that arrive after a newer request was issued are discarded, so the
 * rendered preview always reflects the latest draft (last write wins).
 */
export class PreviewScheduler {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private sequence = 0;
  requestCount = 0;

  constructor(
    private readonly submit: (body: Record<string, unknown>) => Promise<PreviewReport>,
    private readonly callbacks: SchedulerCallbacks,
    private readonly debounceMs = 300,
  ) {}

  edit(draft: RuleDraft): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    const problems = validateDraft(draft);
    if (problems.length > 0) {
      this.callbacks.onInvalid(problems);
      return;
    }
    const body = draftToBody(draft);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire(body);
    }, this.debounceMs);
  }

  private fire(body: Record<string, unknown>): void {
    const ticket = ++this.sequence;
    this.requestCount += 1;
    this.submit(body).then(
      (report) => {
        if (ticket === this.sequence) {
          this.callbacks.onReport(report);
        }
      },
      (error) => {
        if (ticket === this.sequence) {
          this.callbacks.onError?.(error);
        }
      },
    );
  }

  dispose(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.sequence += 1; // orphan any in-flight response
  }
}

// --- preview table view-model ----------------------------------------------

export interface PreviewTableCell {
  raw: Scalar;
  text: string;
  error?: string;
}

export interface PreviewTableRow {
  sourceRowIndex: number;
  filtered: boolean;
  cells: PreviewTableCell[];
}

export interface PreviewTable {
  columns: string[];
  uncovered: string[];
  banners: string[];
  rows: PreviewTableRow[];
  ok: boolean;
}

export function cellText(value: Scalar): string {
  if (value === null) {
    return "";
  }
  if (typeof value === "boolean") {
    return value ? "true" : "false";
  }
  return String(value);
}

/** Project a preview report into the table the editor renders. */
export function renderPreview(report: PreviewReport, schema: Schema): PreviewTable {
  const columns = schema.attributes.map((a) => a.name);
  const uncovered = columns.filter(
    (name) => report.attribute_coverage[name]?.covered === false,
  );
  const rows = report.sample_outcomes.map((outcome) => ({
    sourceRowIndex: outcome.source_row_index,
    filtered: outcome.filtered,
    cells: columns.map((name) => {
      const cell = outcome.cells[name];
      if (cell === undefined) {
        return { raw: null, text: "" };
      }
      if (cell.error !== undefined) {
        return { raw: null, text: "", error: cell.error };
      }
      return { raw: cell.value ?? null, text: cellText(cell.value ?? null) };
    }),
  }));
  return {
    columns,
    uncovered,
    banners: [...report.violations],
    rows,
    ok: report.ok,
  };
}
