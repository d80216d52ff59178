/** Offline-tolerant verdict queue. Verdicts that cannot reach the service
 * are kept in browser storage with an explicit unsynced marker and retried
 * on demand; validation rejections are surfaced, not retried. */

import { ReviewClient, ServiceUnreachableError, ValidationError } from "./client.js";
import type { VerdictPayload } from "./types.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface PendingVerdict {
  verdict: VerdictPayload;
  queuedAt: string;
  synced: false;
}

export interface FlushOutcome {
  submitted: VerdictPayload[];
  rejected: { verdict: VerdictPayload; message: string }[];
  stillPending: VerdictPayload[];
}

const KEY = "hopforge.pendingVerdicts";

export class PendingVerdictQueue {
  constructor(private readonly storage: StorageLike) {}

  pending(): PendingVerdict[] {
    const raw = this.storage.getItem(KEY);
    if (!raw) return [];
    try {
      return JSON.parse(raw) as PendingVerdict[];
    } catch {
      return [];
    }
  }

  private write(entries: PendingVerdict[]): void {
    if (entries.length === 0) {
      this.storage.removeItem(KEY);
    } else {
      this.storage.setItem(KEY, JSON.stringify(entries));
    }
  }

  enqueue(verdict: VerdictPayload): void {
    const entries = this.pending();
    // one pending verdict per (item, annotator): last write wins
    const filtered = entries.filter(
      (e) =>
        e.verdict.item_id !== verdict.item_id ||
        e.verdict.annotator_id !== verdict.annotator_id,
    );
    filtered.push({ verdict, queuedAt: new Date().toISOString(), synced: false });
    this.write(filtered);
  }

  /** Try to submit a verdict now; on network failure it is queued locally
   * and reported as unsynced. */
  async submitOrQueue(
    client: ReviewClient,
    verdict: VerdictPayload,
  ): Promise<{ synced: boolean; status?: string }> {
    try {
      const status = await client.submitVerdict(verdict);
      return { synced: true, status };
    } catch (error) {
      if (error instanceof ServiceUnreachableError) {
        this.enqueue(verdict);
        return { synced: false };
      }
      throw error;
    }
  }

  /** Replay everything pending. Unreachable -> kept; validation rejection
   * (e.g. the item finalized meanwhile) -> dropped and reported. */
  async flush(client: ReviewClient): Promise<FlushOutcome> {
    const outcome: FlushOutcome = { submitted: [], rejected: [], stillPending: [] };
    const remaining: PendingVerdict[] = [];
    for (const entry of this.pending()) {
      try {
        await client.submitVerdict(entry.verdict);
        outcome.submitted.push(entry.verdict);
      } catch (error) {
        if (error instanceof ServiceUnreachableError) {
          remaining.push(entry);
          outcome.stillPending.push(entry.verdict);
        } else if (error instanceof ValidationError) {
          outcome.rejected.push({ verdict: entry.verdict, message: error.message });
        } else {
          throw error;
        }
      }
    }
    this.write(remaining);
    return outcome;
  }
}
