/**
 * Batched soft-logic rule distance and subgradient.
 *
 * For a batch of triplet instances (three entity pairs in chain pattern,
 * each with a per-label probability distribution), computes the hinge
 * distance to satisfaction of the temporal transitivity rules,
 *
 *   d = max(max(P1 + P2 - 1, 0) - P3(head), 0)
 *
 * minimized over the rules whose body matches the argmax labels of pairs
 * 1 and 2, plus the subgradient of that distance with respect to every
 * probability entry. Instances matching no rule get distance 0.
 *
 * Stateless and array-in/array-out: caller-owned buffers are never
 * mutated. Numerically identical to the reference implementation behind
 * the `temprel psl-loss` command line (same IEEE-754 operations in the
 * same order); FORMAT_VERSION pins the corpus/model format generation
 * this build is checked against.
 */

export const FORMAT_VERSION = 1;

export interface Scheme {
  readonly name: string;
  readonly labels: readonly string[];
}

export const CLINICAL3: Scheme = {
  name: "clinical3",
  labels: ["Before", "After", "Overlap"],
};

export const DENSE6: Scheme = {
  name: "dense6",
  labels: ["Before", "After", "Includes", "IsInclude", "Simultaneous", "Vague"],
};

export const SCHEMES: Record<string, Scheme> = {
  [CLINICAL3.name]: CLINICAL3,
  [DENSE6.name]: DENSE6,
};

interface Rule {
  name: string;
  body: [number, number]; // label indices of pairs 1 and 2
  head: number; // label index of pair 3
}

/** Transitivity templates over (before, after, overlapLike) label indices. */
function transitivityRules(scheme: Scheme): Rule[] {
  const b = scheme.labels.indexOf("Before");
  const a = scheme.labels.indexOf("After");
  const o =
    scheme.name === DENSE6.name
      ? scheme.labels.indexOf("Simultaneous")
      : scheme.labels.indexOf("Overlap");
  const letter = (i: number) => scheme.labels[i][0];
  const mk = (l1: number, l2: number, l3: number): Rule => ({
    name: letter(l1) + letter(l2) + letter(l3),
    body: [l1, l2],
    head: l3,
  });
  return [
    mk(b, b, b),
    mk(b, o, b),
    mk(o, b, b),
    mk(o, o, o),
    mk(a, a, a),
    mk(a, o, a),
    mk(o, a, a),
  ];
}

export interface BatchRequest {
  /** Scheme tag: "clinical3" or "dense6". */
  scheme: string;
  /** Probabilities, shape (instances x 3 pairs x labels); rows sum to 1. */
  probs: ReadonlyArray<ReadonlyArray<ReadonlyArray<number>>>;
  /**
   * Matched label indices for pairs 1 and 2 of each instance
   * (instances x >=2). Defaults to the row argmaxes.
   */
  preds?: ReadonlyArray<ReadonlyArray<number>>;
}

export interface BatchResult {
  distances: number[];
  matchedRules: (string | null)[];
  /** Same shape as the request probabilities. */
  subgradients: number[][][];
}

const PROB_SUM_TOL = 1e-6;

function argmax(row: ReadonlyArray<number>): number {
  let best = 0;
  for (let i = 1; i < row.length; i++) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

function checkRow(row: ReadonlyArray<number>, nLabels: number, where: string): void {
  if (row.length !== nLabels) {
    throw new RangeError(`${where}: expected ${nLabels} probabilities, got ${row.length}`);
  }
  let sum = 0;
  for (const p of row) {
    if (!Number.isFinite(p)) throw new RangeError(`${where}: non-finite probability ${p}`);
    sum += p;
  }
  if (Math.abs(sum - 1) > PROB_SUM_TOL + 1e-12) {
    throw new RangeError(`${where}: probabilities sum to ${sum}, expected 1`);
  }
}

/** Distance and subgradient for every instance of a batch. */
export function pslLossBatch(request: BatchRequest): BatchResult {
  const scheme = SCHEMES[request.scheme];
  if (scheme === undefined) {
    throw new RangeError(`unknown scheme ${JSON.stringify(request.scheme)}`);
  }
  const rules = transitivityRules(scheme);
  const n = request.probs.length;
  if (request.preds !== undefined && request.preds.length !== n) {
    throw new RangeError(
      `preds length ${request.preds.length} does not match batch size ${n}`,
    );
  }

  const distances = new Array<number>(n);
  const matchedRules = new Array<string | null>(n);
  const subgradients = new Array<number[][]>(n);
  for (let i = 0; i < n; i++) {
    const probs = request.probs[i];
    if (probs.length !== 3) {
      throw new RangeError(`instance ${i}: expected 3 pair rows, got ${probs.length}`);
    }
    probs.forEach((row, j) => checkRow(row, scheme.labels.length, `instance ${i} pair ${j}`));

    let pred1: number;
    let pred2: number;
    if (request.preds !== undefined) {
      [pred1, pred2] = request.preds[i];
      if (!(pred1 in scheme.labels) || !(pred2 in scheme.labels)) {
        throw new RangeError(`instance ${i}: pred index out of range`);
      }
    } else {
      pred1 = argmax(probs[0]);
      pred2 = argmax(probs[1]);
    }

    const grad = probs.map((row) => new Array<number>(row.length).fill(0));
    let bestD = 1.0;
    let best: { rule: Rule; inner: number; p3: number } | null = null;
    for (const rule of rules) {
      if (pred1 === rule.body[0] && pred2 === rule.body[1]) {
        const p1 = probs[0][pred1];
        const p2 = probs[1][pred2];
        const p3 = probs[2][rule.head];
        const inner = Math.max(p1 + p2 - 1.0, 0.0);
        const dT = Math.max(inner - p3, 0.0);
        if (best === null || dT < bestD) {
          bestD = dT;
          best = { rule, inner, p3 };
        }
      }
    }
    if (best === null) {
      distances[i] = 0.0;
      matchedRules[i] = null;
    } else {
      distances[i] = bestD;
      matchedRules[i] = best.rule.name;
      if (best.inner > 0.0 && best.inner - best.p3 > 0.0) {
        grad[0][pred1] = 1.0;
        grad[1][pred2] = 1.0;
        grad[2][best.rule.head] = -1.0;
      }
    }
    subgradients[i] = grad;
  }
  return { distances, matchedRules, subgradients };
}
