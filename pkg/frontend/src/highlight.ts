/** Supporting-sentence highlighting: a display aid only, never persisted.
 * The highlighted span is the longest common substring (case-insensitive)
 * between the hop's answer and the passage. */

export interface Segment {
  text: string;
  highlighted: boolean;
}

/** Longest common substring of a and b, case-insensitive; returns the
 * matching range inside `a` ([start, end), empty when no overlap). */
export function longestCommonRange(a: string, b: string): [number, number] {
  const la = a.toLowerCase();
  const lb = b.toLowerCase();
  let best = 0;
  let bestEnd = 0;
  // dp over b per position of a; passages are short enough for O(n*m)
  let previous = new Array<number>(lb.length + 1).fill(0);
  for (let i = 1; i <= la.length; i++) {
    const current = new Array<number>(lb.length + 1).fill(0);
    for (let j = 1; j <= lb.length; j++) {
      if (la[i - 1] === lb[j - 1]) {
        current[j] = (previous[j - 1] ?? 0) + 1;
        if ((current[j] ?? 0) > best) {
          best = current[j] ?? 0;
          bestEnd = i;
        }
      }
    }
    previous = current;
  }
  return [bestEnd - best, bestEnd];
}

/** Split `passage` into contiguous segments with the best answer match
 * highlighted. Only matches of at least `minLength` characters count;
 * shorter overlaps produce a single unhighlighted segment. */
export function highlightSegments(passage: string, answer: string, minLength = 3): Segment[] {
  const [start, end] = longestCommonRange(passage, answer);
  if (end - start < minLength) {
    return [{ text: passage, highlighted: false }];
  }
  const segments: Segment[] = [];
  if (start > 0) segments.push({ text: passage.slice(0, start), highlighted: false });
  segments.push({ text: passage.slice(start, end), highlighted: true });
  if (end < passage.length) segments.push({ text: passage.slice(end), highlighted: false });
  return segments;
}

/** The sentence of `passage` containing the highlighted span (for compact
 * card previews). Falls back to the first sentence. */
export function supportingSentence(passage: string, answer: string): string {
  const [start, end] = longestCommonRange(passage, answer);
  const sentences = passage.split(/(?<=[.!?])\s+/);
  if (end > start) {
    let offset = 0;
    for (const sentence of sentences) {
      const sentenceEnd = offset + sentence.length;
      if (start < sentenceEnd && end > offset) return sentence;
      offset = sentenceEnd + 1;
    }
  }
  return sentences[0] ?? passage;
}
