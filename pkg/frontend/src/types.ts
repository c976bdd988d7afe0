// Wire types for the recognition service JSON API. The console displays
// these values verbatim and computes nothing itself.

export interface SpoofReport {
  per_view: { direct: number; ftir: number };
  fused: number;
  threshold: number;
  is_spoof: boolean;
}

export interface FingerSummary {
  minutiae: number;
  quality: number;
}

export interface RecordSummary {
  subject_id: string;
  enrolled_at: string;
  metadata: Record<string, unknown>;
  fingers: Record<string, FingerSummary>;
}

export interface EnrollResponse {
  record: RecordSummary;
  spoof: SpoofReport;
  timings_ms: Record<string, number>;
}

export interface SearchHit {
  subject_id: string;
  finger: number;
  score: number;
  rank: number;
}

export interface IdentifyResponse {
  hits: SearchHit[];
  spoof: SpoofReport;
  probe_minutiae: number;
  timings_ms: Record<string, number>;
}

export interface StatsResponse {
  size: number;
  index_version: number;
  capacity: number;
  thresholds: { verify: number; identify: number };
}

export interface ApiError {
  code: string;
  message: string;
  spoof?: SpoofReport;
}

/** Every response as (status, body); 4xx bodies are ApiError documents. */
export type ApiResult<T> =
  | { ok: true; status: number; body: T }
  | { ok: false; status: number; body: ApiError };
