/**
 * Wire types mirrored from the workbench HTTP API.
 *
 * Every shape here is exactly what the server sends or accepts; the UI adds
 * nothing on top. Keeping them in one file makes it easy to audit that no
 * request can ask for more than these payloads carry.
 */

export interface PostRecord {
  id: string;
  text: string;
  source: 'original' | 'synthetic' | 'real';
  stage: string;
  label: string | null;
  seed_post_id: string | null;
  prompt_id: string | null;
  origin_url: string | null;
  created_at: string;
}

export interface SyntheticVerdict {
  fits_intent: boolean;
  fluent: boolean;
  non_repetitive: boolean;
}

export interface LabelVerdict {
  label: string;
}

export type Verdict = SyntheticVerdict | LabelVerdict;

export interface AnnotationRecord {
  post_id: string;
  annotator_id: string;
  verdict: Verdict;
  submitted_at: string;
  revision: number;
}

/** One entry of GET /api/queues/annotation. */
export interface AnnotationQueueEntry {
  post: PostRecord;
  version: number;
  status: 'pending_one' | 'pending_two' | 'agreed' | 'disagreed' | 'adjudicated';
  visible_annotations: AnnotationRecord[];
}

export interface AnnotationQueuePayload {
  annotator: string;
  posts: AnnotationQueueEntry[];
}

/** GET /api/queues/screen. */
export interface ScreenQueuePayload {
  intent: string;
  offset: number;
  pending: number;
  posts: PostRecord[];
}

export type ScreenGrade = 'pass' | 'fail';

export interface ScreenDecisionBody {
  post_id: string;
  relevance: ScreenGrade;
  completeness: ScreenGrade;
  clarity: ScreenGrade;
  reviewer_id: string;
}

export interface ScreenDecisionRecord {
  post_id: string;
  relevance: string;
  completeness: string;
  clarity: string;
  final: string;
  reviewer_id: string | null;
  decided_at: string | null;
  auto_flags: string[];
}

export interface AnnotationSubmitBody {
  post_id: string;
  annotator_id: string;
  verdict: Verdict;
  expected_version: number;
}

export interface AnnotationSubmitResponse {
  annotation: AnnotationRecord;
  status: AnnotationQueueEntry['status'];
  version: number;
}

/** One entry of GET /api/adjudication. */
export interface AdjudicationQueueEntry {
  post: PostRecord;
  version: number;
  assigned: string[];
  annotations: AnnotationRecord[];
}

export interface AdjudicationQueuePayload {
  posts: AdjudicationQueueEntry[];
}

export interface AdjudicationSubmitBody {
  post_id: string;
  judge_id: string;
  verdict: Verdict;
  rationale: string;
  expected_version: number;
}

export interface AdjudicationSubmitResponse {
  adjudication: {
    post_id: string;
    judge_id: string;
    verdict: Verdict;
    rationale: string;
    decided_at: string;
  };
  final_stage: string;
}

export interface ErrorPayload {
  error: {
    code: string;
    message: string;
  };
}
