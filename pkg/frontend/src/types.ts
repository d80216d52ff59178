/** Wire types of the review service HTTP API. */

export type Decision = "retain" | "discard";

export const DIMENSION_FLAGS = [
  "factuality",
  "faithfulness",
  "fluency",
  "reasoning_validity",
  "comparison_consistency",
] as const;

export type DimensionFlag = (typeof DIMENSION_FLAGS)[number];

export interface LadderRow {
  hop: number;
  sub_question: string;
  sub_answer: string;
  composed_question: string;
  composed_answer: string;
  doc_id: string;
  doc_title?: string;
  /** Verbatim corpus passage supporting this hop. */
  evidence_text?: string;
}

export interface ReviewItem {
  item_id: string;
  topology: "inference" | "comparison";
  hops: number;
  question: string;
  answer: string;
  answer_aliases: string[];
  ladder: LadderRow[];
}

export type AssignmentStatus = "open" | "complete" | "adjudicating" | "finalized";

export interface ReviewCard {
  item: ReviewItem;
  status: AssignmentStatus;
  /** Set locally once this browser has submitted (or queued) a verdict. */
  myVerdict?: { decision: Decision; dimension_flags: DimensionFlag[]; synced: boolean };
}

export interface VerdictPayload {
  item_id: string;
  annotator_id: string;
  decision: Decision;
  dimension_flags: DimensionFlag[];
}

export interface AgreementReport {
  n_items: number;
  n_raters: number;
  kappa: number | null;
  per_category_marginals: Record<string, number>;
  degenerate: boolean;
  adjudication_pending: number;
}

export interface VerdictRecord {
  annotator_id: string;
  decision: Decision;
  dimension_flags: DimensionFlag[];
  submitted_at: string;
}

export interface ItemDetail {
  item: ReviewItem;
  status: AssignmentStatus;
  verdicts: VerdictRecord[];
  adjudication: { final_decision: Decision; rationale: string; at: string } | null;
  consensus: Decision | null;
}
