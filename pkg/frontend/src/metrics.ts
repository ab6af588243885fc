// Client-side control metrics over the displayed relevance values.
// The threshold slider re-evaluates these without another round trip;
// at t = N_C they must agree exactly with the server's reported values.

export function controlPrecision(relevance: number[], k: number, t: number): number {
  if (k < 1 || k > relevance.length) {
    throw new RangeError(`k=${k} outside 1..${relevance.length}`);
  }
  let hits = 0;
  for (let p = 0; p < k; p++) {
    if (relevance[p] >= t) hits++;
  }
  return hits / k;
}

export function controlDepth(relevance: number[], t: number): number {
  for (let p = 0; p < relevance.length; p++) {
    if (relevance[p] >= t) return p + 1;
  }
  return relevance.length + 1;
}
