/** Typed client for the review service. All aggregate numbers (consensus,
 * kappa) come from the service; this module never computes them. */

import type {
  AgreementReport,
  AssignmentStatus,
  ItemDetail,
  ReviewCard,
  VerdictPayload,
} from "./types.js";

export class AuthError extends Error {
  constructor(message = "authentication failed") {
    super(message);
    this.name = "AuthError";
  }
}

export class ServiceUnreachableError extends Error {
  constructor(message = "review service unreachable") {
    super(message);
    this.name = "ServiceUnreachableError";
  }
}

/** The service rejected the request (e.g. finalized item, missing flags);
 * carries the service's own message for inline display. */
export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

export interface ClientConfig {
  baseUrl: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class ReviewClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(config: ClientConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.token = config.token;
    this.fetchImpl = config.fetchImpl ?? fetch;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
      ...(this.token ? { authorization: `Bearer ${this.token}` } : {}),
    };
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, { ...init, headers });
    } catch {
      throw new ServiceUnreachableError();
    }
    if (response.status === 401 || response.status === 403) {
      throw new AuthError(await detail(response));
    }
    if (response.status >= 400) {
      throw new ValidationError(await detail(response));
    }
    return response.json();
  }

  /** Pending cards for one annotator, oldest assignment first. */
  async loadQueue(annotatorId: string): Promise<ReviewCard[]> {
    const payload = (await this.request(
      `/queue?annotator=${encodeURIComponent(annotatorId)}`,
    )) as { cards: ReviewCard[] };
    return payload.cards;
  }

  /** Submit one verdict. A discard without a dimension flag never leaves
   * the client: the service invariant is mirrored here. */
  async submitVerdict(verdict: VerdictPayload): Promise<AssignmentStatus> {
    if (verdict.decision === "discard" && verdict.dimension_flags.length === 0) {
      throw new ValidationError("a discard verdict requires at least one dimension flag");
    }
    const payload = (await this.request("/verdict", {
      method: "POST",
      body: JSON.stringify(verdict),
    })) as { status: AssignmentStatus };
    return payload.status;
  }

  async agreement(): Promise<AgreementReport> {
    return (await this.request("/agreement")) as AgreementReport;
  }

  async itemDetail(itemId: string): Promise<ItemDetail> {
    return (await this.request(`/item/${encodeURIComponent(itemId)}`)) as ItemDetail;
  }

  async adjudicate(
    itemId: string,
    finalDecision: "retain" | "discard",
    rationale: string,
  ): Promise<AssignmentStatus> {
    const payload = (await this.request("/adjudicate", {
      method: "POST",
      body: JSON.stringify({
        item_id: itemId,
        final_decision: finalDecision,
        rationale,
      }),
    })) as { status: AssignmentStatus };
    return payload.status;
  }
}

async function detail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return `service returned ${response.status}`;
  }
}
