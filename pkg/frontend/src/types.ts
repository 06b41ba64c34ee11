// Response shapes of the backend JSON API. The UI renders these verbatim:
// it never derives graph facts on its own (thin-client invariant).

export interface NodeRef {
  id: string;
  text: string;
  class: string;
}

export interface RetrievalResult {
  status: "ok" | "not_found";
  subject: NodeRef | null;
  hazards: NodeRef[];
  equipment: NodeRef[];
  materials: NodeRef[];
  suggestions: NodeRef[];
}

export interface PathJoin {
  event_a: string;
  event_b: string;
  shared: string;
}

export interface PropagationPath {
  kind: "observed" | "inferred";
  nodes: NodeRef[];
  relations: string[]; // one per hop, nodes.length - 1 entries
  joins: PathJoin[];
}

export interface PathsResponse {
  paths: PropagationPath[];
}

export interface AnswerItem {
  text: string;
  score: number;
  path: string[];
  provenance: string[];
}

export interface AnswerResponse {
  question: string;
  status: "ok" | "refused" | "not_found";
  answers: AnswerItem[];
  message: string;
  entities: string[];
  slots: string[];
}

export interface ErrorEnvelope {
  code: "bad_request" | "not_found" | "out_of_scope" | "model_missing" | "internal";
  message: string;
  detail: unknown;
}

export interface NeighborEdge {
  relation: string;
  node: NodeRef;
  provenance: string[];
}

export interface NeighborsResponse {
  node: NodeRef;
  out: NeighborEdge[];
  in: NeighborEdge[];
}

export type QasOutcome =
  | { kind: "ok"; answer: AnswerResponse }
  | { kind: "refused"; envelope: ErrorEnvelope }
  | { kind: "not_found"; envelope: ErrorEnvelope };
