/**
 * Typed client for the /api/v1 HTTP interface.
 *
 * Every method is a thin wrapper over one route; the client never reshapes
 * payloads, so anything a view renders is exactly what the service sent.
 * The fetch function is injectable for tests.
 */

export type Scalar = string | number | boolean | null;

export interface ErrorEnvelope {
  code: string;
  message: string;
  details?: Record<string, unknown>;
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly details: Record<string, unknown> | undefined;

  constructor(status: number, envelope: ErrorEnvelope) {
    super(envelope.message);
    this.code = envelope.code;
    this.status = status;
    this.details = envelope.details;
  }

  violations(): string[] {
    const raw = this.details?.["violations"];
    return Array.isArray(raw) ? raw.map(String) : [];
  }
}

export interface AttributeSpec {
  name: string;
  description: string;
  datatype: string;
  required: boolean;
  format_hint: string | null;
}

export interface Schema {
  attributes: AttributeSpec[];
  version: number;
}

export interface Dataset {
  id: string;
  title: string;
  description: string;
  tags: string[];
  license: string | null;
  owner: string;
  schema: Schema;
  created_at: string;
  updated_at: string;
}

export interface Listing<T> {
  items: T[];
  total: number;
}

export interface RuleJson {
  kind: string;
  target_attribute: string | null;
  params: Record<string, unknown>;
}

export interface RuleSetJson {
  header_row: number | null;
  rules: RuleJson[];
  version: number;
}

export interface Pool {
  id: string;
  dataset_id: string;
  name: string;
  rules: RuleSetJson;
  created_at: string;
}

export interface Resource {
  id: string;
  pool_id: string;
  origin: { type: string } & Record<string, unknown>;
  format: string;
  checksum: string | null;
  fetched_at: string | null;
  status: string;
  rows_read: number;
  records_produced: number;
  rows_rejected: number;
}

export interface RowError {
  source_row_index: number;
  attribute: string | null;
  message: string;
}

export interface IngestReport {
  resource_id: string;
  rows_read: number;
  records_produced: number;
  rows_rejected: number;
  rows_filtered: number;
  errors: RowError[];
  duration_ms: number;
}

export interface DataPage {
  items: Record<string, Scalar>[];
  total: number;
  limit: number;
  offset: number;
}

export interface PreviewCell {
  value?: Scalar;
  error?: string;
}

export interface SampleOutcome {
  source_row_index: number;
  filtered: boolean;
  cells: Record<string, PreviewCell>;
}

export interface CoverageEntry {
  covered: boolean;
  rule_kind: string | null;
}

export interface PreviewReport {
  ok: boolean;
  violations: string[];
  attribute_coverage: Record<string, CoverageEntry>;
  sample_outcomes: SampleOutcome[];
  rules: RuleSetJson;
}

export interface SamplePayload {
  headers: string[] | null;
  rows: string[][];
}

export interface DataQuery {
  filters?: string[];
  sort?: string[];
  limit?: number;
  offset?: number;
  fields?: string;
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  token: string | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    options: { json?: unknown; form?: FormData; params?: [string, string][] } = {},
  ): Promise<T> {
    let url = this.baseUrl + path;
    if (options.params && options.params.length > 0) {
      url += "?" + new URLSearchParams(options.params).toString();
    }
    const headers: Record<string, string> = {};
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    let body: BodyInit | undefined;
    if (options.form !== undefined) {
      body = options.form; // browser sets the multipart boundary itself
    } else if (options.json !== undefined) {
      headers["Content-Type"] = "application/json";
      body = JSON.stringify(options.json);
    }
    const response = await this.fetchFn(url, { method, headers, body });
    if (!response.ok) {
      let envelope: ErrorEnvelope;
      try {
        envelope = (await response.json()) as ErrorEnvelope;
      } catch {
        envelope = { code: String(response.status), message: response.statusText };
      }
      throw new ApiError(response.status, envelope);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  // --- accounts ---

  async register(username: string, email: string, password: string): Promise<void> {
    await this.request("POST", "/api/v1/users", { json: { username, email, password } });
  }

  async login(username: string, password: string): Promise<void> {
    const session = await this.request<{ token: string }>("POST", "/api/v1/sessions", {
      json: { username, password },
    });
    this.token = session.token;
  }

  logout(): void {
    this.token = null;
  }

  // --- datasets ---

  listDatasets(): Promise<Listing<Dataset>> {
    return this.request("GET", "/api/v1/datasets");
  }

  getDataset(id: string): Promise<Dataset> {
    return this.request("GET", `/api/v1/datasets/${id}`);
  }

  createDataset(body: {
    title: string;
    description: string;
    tags: string[];
    schema: { attributes: Partial<AttributeSpec>[] };
  }): Promise<Dataset> {
    return this.request("POST", "/api/v1/datasets", { json: body });
  }

  // --- pools and rules ---

  listPools(datasetId: string): Promise<Listing<Pool>> {
    return this.request("GET", `/api/v1/datasets/${datasetId}/pools`);
  }

  createPool(datasetId: string, name: string): Promise<Pool> {
    return this.request("POST", `/api/v1/datasets/${datasetId}/pools`, {
      json: { name },
    });
  }

  putRules(poolId: string, rules: unknown): Promise<Pool> {
    return this.request("PUT", `/api/v1/pools/${poolId}/rules`, { json: rules });
  }

  preview(poolId: string, body: unknown): Promise<PreviewReport> {
    return this.request("POST", `/api/v1/pools/${poolId}/preview`, { json: body });
  }

  // --- resources ---

  uploadResource(poolId: string, name: string, file: Blob): Promise<Resource> {
    const form = new FormData();
    form.append("file", file, name);
    return this.request("POST", `/api/v1/pools/${poolId}/resources`, { form });
  }

  resourceStatus(resourceId: string): Promise<Resource> {
    return this.request("GET", `/api/v1/resources/${resourceId}`);
  }

  sampleResource(resourceId: string, n: number, headerRow?: number): Promise<SamplePayload> {
    const params: [string, string][] = [["n", String(n)]];
    if (headerRow !== undefined) {
      params.push(["header_row", String(headerRow)]);
    }
    return this.request("GET", `/api/v1/resources/${resourceId}/sample`, { params });
  }

  ingestResource(resourceId: string): Promise<IngestReport> {
    return this.request("POST", `/api/v1/resources/${resourceId}/ingest`);
  }

  // --- data access ---

  queryData(datasetId: string, query: DataQuery): Promise<DataPage> {
    return this.request("GET", `/api/v1/datasets/${datasetId}/data`, {
      params: queryParams(query),
    });
  }

  /** Walk pages until a short one; yields every matching record once. */
  async fetchAllPages(
    datasetId: string,
    query: DataQuery,
    pageSize = 100,
  ): Promise<Record<string, Scalar>[]> {
    const rows: Record<string, Scalar>[] = [];
    let offset = query.offset ?? 0;
    for (;;) {
      const page = await this.queryData(datasetId, {
        ...query,
        limit: pageSize,
        offset,
      });
      rows.push(...page.items);
      if (page.items.length < pageSize) {
        return rows;
      }
      offset += pageSize;
    }
  }

  exportUrl(datasetId: string, format: "csv" | "json", query: DataQuery = {}): string {
    const params = queryParams(query);
    params.push(["format", format]);
    return (
      this.baseUrl +
      `/api/v1/datasets/${datasetId}/export?` +
      new URLSearchParams(params).toString()
    );
  }
}

export function queryParams(query: DataQuery): [string, string][] {
  const params: [string, string][] = [];
  for (const f of query.filters ?? []) {
    params.push(["filter", f]);
  }
  for (const s of query.sort ?? []) {
    params.push(["sort", s]);
  }
  if (query.limit !== undefined) {
    params.push(["limit", String(query.limit)]);
  }
  if (query.offset !== undefined) {
    params.push(["offset", String(query.offset)]);
  }
  if (query.fields) {
    params.push(["fields", query.fields]);
  }
  return params;
}
