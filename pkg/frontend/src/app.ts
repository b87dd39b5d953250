/**
 * Single-page client: dataset list, dataset detail, rule editor with live
 * preview, data browser, and trend chart. Hash-routed, no framework.
 *
 * Browsing, querying and charting work logged out; publishing controls
 * appear once a session token is held. The token lives in memory only.
 */

import {
  ApiClient,
  ApiError,
  Dataset,
  DataPage,
  Pool,
  Resource,
  Scalar,
  Schema,
} from "./api.js";
import {
  PreviewScheduler,
  RuleDraft,
  draftToBody,
  emptyDraft,
  renderPreview,
} from "./preview.js";
import { chartSeries, plotPoints } from "./chart.js";

// service location: same origin unless index.html's api-base meta says otherwise
const apiBase =
  document.querySelector<HTMLMetaElement>('meta[name="api-base"]')?.content ?? "";
const api = new ApiClient(apiBase);

// resources uploaded this session, keyed by pool; the API has no
// list-resources route, so the UI remembers what it created
const sessionResources = new Map<string, Resource[]>();

// --- tiny DOM helpers -------------------------------------------------------

type Child = Node | string | null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") {
      node.className = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child !== null) {
      node.append(child);
    }
  }
  return node;
}

function option(value: string, label?: string): HTMLOptionElement {
  return el("option", { value }, label ?? value);
}

function scalarText(value: Scalar): string {
  if (value === null) {
    return "";
  }
  if (typeof value === "boolean") {
    return value ? "true" : "false";
  }
  return String(value);
}

function describeError(error: unknown): string {
  if (error instanceof ApiError) {
    const extra = error.violations();
    return extra.length > 0
      ? `${error.code}: ${error.message} (${extra.join("; ")})`
      : `${error.code}: ${error.message}`;
  }
  return String(error);
}

// --- shell -------------------------------------------------------------------

function root(): HTMLElement {
  const node = document.getElementById("app");
  if (!node) {
    throw new Error("missing #app mount point");
  }
  return node;
}

function statusLine(): HTMLElement {
  let node = document.getElementById("status");
  if (!node) {
    node = el("div", { id: "status" });
    document.body.append(node);
  }
  return node;
}

function say(text: string, isError = false): void {
  const node = statusLine();
  node.textContent = text;
  node.className = isError ? "error" : "";
}

function sessionBar(): HTMLElement {
  const bar = el("header", { class: "session" });
  const home = el("a", { href: "#/datasets" }, "datasets");
  bar.append(home);
  if (api.token) {
    const out = el("button", {}, "log out");
    out.addEventListener("click", () => {
      api.logout();
      render();
    });
    bar.append(el("span", {}, "session active"), out);
  } else {
    const username = el("input", { placeholder: "username" });
    const password = el("input", { placeholder: "password", type: "password" });
    const go = el("button", {}, "log in");
    go.addEventListener("click", async () => {
      try {
        await api.login(username.value, password.value);
        say("logged in");
        render();
      } catch (error) {
        say(describeError(error), true);
      }
    });
    bar.append(username, password, go);
  }
  return bar;
}

// --- dataset list ---------------------------------------------------------

async function datasetListView(): Promise<HTMLElement> {
  const listing = await api.listDatasets();
  const view = el("section", {}, el("h1", {}, "Datasets"));
  const table = el("table", { class: "grid" });
  table.append(
    el("tr", {}, el("th", {}, "title"), el("th", {}, "tags"), el("th", {}, "attributes")),
  );
  for (const dataset of listing.items) {
    const link = el("a", { href: `#/datasets/${dataset.id}` }, dataset.title);
    table.append(
      el(
        "tr",
        {},
        el("td", {}, link),
        el("td", {}, dataset.tags.join(", ")),
        el("td", {}, dataset.schema.attributes.map((a) => a.name).join(", ")),
      ),
    );
  }
  view.append(table, el("p", {}, `${listing.total} total`));
  return view;
}

// --- dataset detail ---------------------------------------------------------

function schemaTable(schema: Schema): HTMLElement {
  const table = el("table", { class: "grid" });
  table.append(
    el(
      "tr",
      {},
      el("th", {}, "attribute"),
      el("th", {}, "datatype"),
      el("th", {}, "required"),
      el("th", {}, "description"),
    ),
  );
  for (const attr of schema.attributes) {
    table.append(
      el(
        "tr",
        {},
        el("td", {}, attr.name),
        el("td", {}, attr.datatype),
        el("td", {}, attr.required ? "yes" : "no"),
        el("td", {}, attr.description),
      ),
    );
  }
  return table;
}

async function datasetDetailView(datasetId: string): Promise<HTMLElement> {
  const dataset = await api.getDataset(datasetId);
  const pools = await api.listPools(datasetId);
  const view = el(
    "section",
    {},
    el("h1", {}, dataset.title),
    el("p", {}, dataset.description),
    el(
      "p",
      {},
      el("a", { href: `#/datasets/${datasetId}/browse` }, "browse data"),
      " · ",
      el("a", { href: `#/datasets/${datasetId}/chart` }, "trend chart"),
    ),
    el("h2", {}, `Schema (version ${dataset.schema.version})`),
    schemaTable(dataset.schema),
    el("h2", {}, "Resource pools"),
  );
  for (const pool of pools.items) {
    view.append(poolPanel(dataset, pool));
  }
  if (api.token) {
    const name = el("input", { placeholder: "pool name" });
    const add = el("button", {}, "create pool");
    add.addEventListener("click", async () => {
      try {
        await api.createPool(datasetId, name.value);
        render();
      } catch (error) {
        say(describeError(error), true);
      }
    });
    view.append(el("div", { class: "panel" }, name, add));
  }
  return view;
}

function poolPanel(dataset: Dataset, pool: Pool): HTMLElement {
  const panel = el(
    "div",
    { class: "panel" },
    el("h3", {}, pool.name),
    el(
      "p",
      {},
      `rules version ${pool.rules.version}, ${pool.rules.rules.length} rules · `,
      el("a", { href: `#/datasets/${dataset.id}/pools/${pool.id}/rules` }, "edit rules"),
    ),
  );
  const uploads = sessionResources.get(pool.id) ?? [];
  for (const resource of uploads) {
    const line = el(
      "p",
      {},
      `${String(resource.origin["filename"] ?? resource.id)} — ${resource.status}`,
    );
    const ingest = el("button", {}, "ingest");
    ingest.addEventListener("click", async () => {
      try {
        const report = await api.ingestResource(resource.id);
        say(
          `ingested ${report.records_produced} records, ` +
            `${report.rows_rejected} rows rejected`,
        );
        render();
      } catch (error) {
        say(describeError(error), true);
      }
    });
    if (api.token) {
      line.append(" ", ingest);
    }
    panel.append(line);
  }
  if (api.token) {
    const file = el("input", { type: "file" });
    const upload = el("button", {}, "upload file");
    upload.addEventListener("click", async () => {
      const chosen = file.files?.[0];
      if (!chosen) {
        say("pick a file first", true);
        return;
      }
      try {
        const resource = await api.uploadResource(pool.id, chosen.name, chosen);
        sessionResources.set(pool.id, [...uploads, resource]);
        say(`uploaded ${chosen.name}`);
        render();
      } catch (error) {
        say(describeError(error), true);
      }
    });
    panel.append(el("div", {}, file, upload));
  }
  return panel;
}

// --- rule editor ---------------------------------------------------------

async function ruleEditorView(datasetId: string, poolId: string): Promise<HTMLElement> {
  const dataset = await api.getDataset(datasetId);
  const schema = dataset.schema;
  const draft: RuleDraft = emptyDraft();
  for (const attr of schema.attributes) {
    draft.attributes[attr.name] = {
      mode: attr.datatype === "date" || attr.datatype === "datetime" ? "date" : "map",
      source: "",
    };
  }

  const view = el("section", {}, el("h1", {}, "Rule editor"));
  const uploads = sessionResources.get(poolId) ?? [];
  const resourcePick = el("select", {});
  for (const resource of uploads) {
    resourcePick.append(
      option(resource.id, String(resource.origin["filename"] ?? resource.id)),
    );
  }
  const resourceManual = el("input", { placeholder: "or paste a resource id" });
  view.append(
    el("p", {}, "preview against: ", resourcePick, " ", resourceManual),
  );

  const previewPane = el("div", { class: "panel" }, "edit the draft to preview");
  const problemsPane = el("div", { class: "error" });

  const scheduler = new PreviewScheduler(
    (body) =>
      api.preview(poolId, {
        resource_id: resourceManual.value || resourcePick.value,
        rules: body,
        n: 10,
      }),
    {
      onReport: (report) => {
        problemsPane.textContent = "";
        previewPane.replaceChildren(previewTableNode(report, schema));
      },
      onInvalid: (problems) => {
        problemsPane.textContent = problems.join("; ");
      },
      onError: (error) => {
        problemsPane.textContent = describeError(error);
      },
    },
  );

  const form = el("div", { class: "panel" });
  for (const attr of schema.attributes) {
    const mode = el("select", {});
    mode.append(option("map"), option("date"), option("constant"));
    const choice = draft.attributes[attr.name];
    if (choice) {
      mode.value = choice.mode;
    }
    const source = el("input", { placeholder: "source column" });
    const pattern = el("input", { placeholder: "date pattern (blank = ISO)" });
    const sync = () => {
      draft.attributes[attr.name] = {
        mode: mode.value as RuleDraft["attributes"][string]["mode"],
        source: source.value,
        ...(mode.value === "date" && pattern.value !== ""
          ? { pattern: pattern.value }
          : {}),
        ...(mode.value === "constant" ? { value: source.value } : {}),
      };
      scheduler.edit(draft);
    };
    for (const input of [mode, source, pattern]) {
      input.addEventListener("input", sync);
    }
    form.append(el("div", {}, el("label", {}, `${attr.name} `), mode, source, pattern));
  }
  const save = el("button", {}, "save rules");
  save.addEventListener("click", async () => {
    try {
      const pool = await api.putRules(poolId, draftToBody(draft));
      say(`saved rules version ${pool.rules.version}; ingestion enabled`);
    } catch (error) {
      say(describeError(error), true);
    }
  });
  form.append(save);

  view.append(
    el("div", { class: "columns" }, form, el("div", {}, problemsPane, previewPane)),
  );
  return view;
}

function previewTableNode(
  report: Parameters<typeof renderPreview>[0],
  schema: Schema,
): HTMLElement {
  const model = renderPreview(report, schema);
  const wrap = el("div", {});
  for (const banner of model.banners) {
    wrap.append(el("div", { class: "banner" }, banner));
  }
  const table = el("table", { class: "grid" });
  const head = el("tr", {}, el("th", {}, "#"));
  for (const column of model.columns) {
    const flagged = model.uncovered.includes(column);
    head.append(el("th", { class: flagged ? "uncovered" : "" }, column));
  }
  table.append(head);
  for (const row of model.rows) {
    const tr = el(
      "tr",
      { class: row.filtered ? "filtered" : "" },
      el("td", {}, String(row.sourceRowIndex)),
    );
    for (const cell of row.cells) {
      if (cell.error !== undefined) {
        tr.append(el("td", { class: "cell-error", title: cell.error }, "!"));
      } else {
        tr.append(el("td", {}, cell.text));
      }
    }
    table.append(tr);
  }
  wrap.append(table);
  return wrap;
}

// --- data browser ------------------------------------------------------------

async function browserView(datasetId: string): Promise<HTMLElement> {
  const dataset = await api.getDataset(datasetId);
  const names = dataset.schema.attributes.map((a) => a.name);
  const view = el("section", {}, el("h1", {}, `${dataset.title}: data`));

  const attrPick = el("select", {});
  names.forEach((n) => attrPick.append(option(n)));
  const opPick = el("select", {});
  for (const op of ["eq", "ne", "lt", "lte", "gt", "gte", "contains"]) {
    opPick.append(option(op));
  }
  const operand = el("input", { placeholder: "operand" });
  const addFilter = el("button", {}, "add filter");
  const filterList = el("ul", {});
  const filters: string[] = [];

  const sortPick = el("select", {});
  sortPick.append(option("", "unsorted"));
  for (const name of names) {
    sortPick.append(option(`${name}:asc`), option(`${name}:desc`));
  }

  const tableWrap = el("div", {});
  const pageInfo = el("span", {});
  let offset = 0;
  const pageSize = 25;

  async function load(): Promise<void> {
    try {
      const query = {
        filters,
        sort: sortPick.value ? [sortPick.value] : [],
        limit: pageSize,
        offset,
      };
      const page = await api.queryData(datasetId, query);
      tableWrap.replaceChildren(dataTable(names, page));
      pageInfo.textContent = `${page.offset + 1}–${page.offset + page.items.length} of ${page.total}`;
      exportCsv.href = api.exportUrl(datasetId, "csv", { filters });
      exportJson.href = api.exportUrl(datasetId, "json", { filters });
    } catch (error) {
      say(describeError(error), true);
    }
  }

  addFilter.addEventListener("click", () => {
    const text = `${attrPick.value}:${opPick.value}:${operand.value}`;
    filters.push(text);
    const item = el("li", {}, text, " ");
    const drop = el("button", {}, "remove");
    drop.addEventListener("click", () => {
      filters.splice(filters.indexOf(text), 1);
      item.remove();
      offset = 0;
      void load();
    });
    item.append(drop);
    filterList.append(item);
    offset = 0;
    void load();
  });
  sortPick.addEventListener("input", () => {
    offset = 0;
    void load();
  });

  const prev = el("button", {}, "previous");
  const next = el("button", {}, "next");
  prev.addEventListener("click", () => {
    offset = Math.max(0, offset - pageSize);
    void load();
  });
  next.addEventListener("click", () => {
    offset += pageSize;
    void load();
  });

  const exportCsv = el("a", { href: "#", download: "" }, "export CSV");
  const exportJson = el("a", { href: "#", download: "" }, "export JSON");

  view.append(
    el("div", { class: "panel" }, attrPick, opPick, operand, addFilter, filterList),
    el("div", { class: "panel" }, "sort: ", sortPick, " ", prev, next, " ", pageInfo),
    el("p", {}, exportCsv, " · ", exportJson),
    tableWrap,
  );
  await load();
  return view;
}

function dataTable(names: string[], page: DataPage): HTMLElement {
  const table = el("table", { class: "grid" });
  const head = el("tr", {});
  names.forEach((n) => head.append(el("th", {}, n)));
  table.append(head);
  for (const item of page.items) {
    const tr = el("tr", {});
    names.forEach((n) => tr.append(el("td", {}, scalarText(item[n] ?? null))));
    table.append(tr);
  }
  return table;
}

// --- trend chart ------------------------------------------------------------

async function chartView(datasetId: string): Promise<HTMLElement> {
  const dataset = await api.getDataset(datasetId);
  const names = dataset.schema.attributes.map((a) => a.name);
  const view = el("section", {}, el("h1", {}, `${dataset.title}: trends`));

  const filterInput = el("input", {
    placeholder: "filter, e.g. species:eq:Carite",
  });
  const xPick = el("select", {});
  const yPick = el("select", {});
  names.forEach((n) => {
    xPick.append(option(n));
    yPick.append(option(n));
  });
  const draw = el("button", {}, "draw");
  const plotWrap = el("div", {});

  draw.addEventListener("click", async () => {
    try {
      const filters = filterInput.value ? [filterInput.value] : [];
      const series = await chartSeries(api, datasetId, {
        xAttribute: xPick.value,
        yAttribute: yPick.value,
        filters,
      });
      plotWrap.replaceChildren(seriesSvg(series));
      say(`${series.length} points`);
    } catch (error) {
      say(describeError(error), true);
    }
  });

  view.append(
    el("div", { class: "panel" }, filterInput, " x: ", xPick, " y: ", yPick, " ", draw),
    plotWrap,
  );
  return view;
}

function seriesSvg(series: [Scalar, number][]): Element {
  const geometry = { width: 720, height: 320, padding: 40 };
  const ns = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(ns, "svg");
  svg.setAttribute("width", String(geometry.width));
  svg.setAttribute("height", String(geometry.height));
  svg.setAttribute("class", "chart");
  if (series.length === 0) {
    const empty = document.createElementNS(ns, "text");
    empty.setAttribute("x", String(geometry.width / 2));
    empty.setAttribute("y", String(geometry.height / 2));
    empty.textContent = "no matching records";
    svg.append(empty);
    return svg;
  }
  const points = plotPoints(series, geometry);
  const line = document.createElementNS(ns, "polyline");
  line.setAttribute("points", points.map((p) => `${p.x},${p.y}`).join(" "));
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "currentColor");
  svg.append(line);
  for (const point of points) {
    const dot = document.createElementNS(ns, "circle");
    dot.setAttribute("cx", String(point.x));
    dot.setAttribute("cy", String(point.y));
    dot.setAttribute("r", "3");
    const label = document.createElementNS(ns, "title");
    label.textContent = `${point.label}: ${point.value}`;
    dot.append(label);
    svg.append(dot);
  }
  const first = points[0];
  const last = points[points.length - 1];
  if (first && last) {
    for (const [p, anchor] of [
      [first, "start"],
      [last, "end"],
    ] as const) {
      const text = document.createElementNS(ns, "text");
      text.setAttribute("x", String(p.x));
      text.setAttribute("y", String(geometry.height - 8));
      text.setAttribute("text-anchor", anchor);
      text.textContent = p.label;
      svg.append(text);
    }
  }
  return svg;
}

// --- router -----------------------------------------------------------------

async function render(): Promise<void> {
  const mount = root();
  mount.replaceChildren(sessionBar());
  const hash = window.location.hash || "#/datasets";
  const parts = hash.replace(/^#\//, "").split("/");
  try {
    if (parts[0] === "datasets" && parts.length === 1) {
      mount.append(await datasetListView());
    } else if (parts[0] === "datasets" && parts.length === 2 && parts[1]) {
      mount.append(await datasetDetailView(parts[1]));
    } else if (parts[0] === "datasets" && parts[2] === "browse" && parts[1]) {
      mount.append(await browserView(parts[1]));
    } else if (parts[0] === "datasets" && parts[2] === "chart" && parts[1]) {
      mount.append(await chartView(parts[1]));
    } else if (
      parts[0] === "datasets" &&
      parts[2] === "pools" &&
      parts[4] === "rules" &&
      parts[1] &&
      parts[3]
    ) {
      mount.append(await ruleEditorView(parts[1], parts[3]));
    } else {
      mount.append(el("p", {}, "not found"));
    }
  } catch (error) {
    mount.append(el("p", { class: "error" }, describeError(error)));
  }
}

window.addEventListener("hashchange", () => void render());
window.addEventListener("DOMContentLoaded", () => void render());
