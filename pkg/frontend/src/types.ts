/** Wire types mirroring the screening service JSON API. */

export type Modality = "ct" | "cxr";

export type TriageDecision =
  | "UNREVIEWED"
  | "CONFIRM_POSITIVE"
  | "CONFIRM_NEGATIVE"
  | "NEEDS_REVIEW";

export const TRIAGE_DECISIONS: TriageDecision[] = [
  "UNREVIEWED",
  "CONFIRM_POSITIVE",
  "CONFIRM_NEGATIVE",
  "NEEDS_REVIEW",
];

export interface PredictResponse {
  case_id: string;
  modality: Modality;
  probabilities: Record<string, number>;
  predicted_label: string;
  model_version: string;
}

export interface CaseSummary {
  case_id: string;
  modality: Modality;
  probabilities: Record<string, number>;
  predicted_label: string;
  model_version: string;
  triage: TriageDecision;
  note: string;
  created_at: number;
  updated_at: number;
}

export interface CaseListing {
  cases: CaseSummary[];
  limit: number;
  offset: number;
}

export interface HealthResponse {
  status: "ok" | "degraded";
  models: Record<string, string | null>;
}

/** Local view state for one opened case: everything besides the case summary
 * itself comes from UI controls, never from local computation. */
export interface CaseView {
  summary: CaseSummary;
  selectedClass: string;
  alpha: number;
}
