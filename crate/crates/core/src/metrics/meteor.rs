use std::collections::HashMap;

use super::check_aligned;
use crate::error::Result;

/// Search nodes explored before the best alignment found so far is kept.
const NODE_BUDGET: usize = 2_000_000;

/// A one-to-one exact-match alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(hypothesis index, reference index)` in hypothesis order.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
}

struct Search<'a> {
    hyp: &'a [usize],
    positions: Vec<Vec<usize>>,
    suffix: Vec<Vec<usize>>,
    unused: Vec<usize>,
    used: Vec<bool>,
    target: usize,
    pairs: Vec<(usize, usize)>,
    best: Option<Alignment>,
    nodes: usize,
}

impl Search<'_> {
    fn reachable(&self, i: usize) -> usize {
        self.suffix[i]
            .iter()
            .zip(&self.unused)
            .map(|(&h, &r)| h.min(r))
            .sum()
    }

    fn run(&mut self, i: usize, chunks: usize) {
        self.nodes += 1;
        // Chunk counts never decrease along a path.
        if self.best.as_ref().is_some_and(|b| chunks >= b.chunks) {
            return;
        }
        if self.pairs.len() == self.target {
            self.best = Some(Alignment { pairs: self.pairs.clone(), chunks });
            return;
        }
        if i == self.hyp.len() || self.nodes > NODE_BUDGET {
            return;
        }
        if self.pairs.len() + self.reachable(i) < self.target {
            return;
        }
        let w = self.hyp[i];
        let cont = match self.pairs.last() {
            Some(&(pi, pj)) if pi + 1 == i => Some(pj + 1),
            _ => None,
        };
        let mut candidates: Vec<usize> = self.positions[w].iter().copied().filter(|&j| !self.used[j]).collect();
        if let Some(c) = cont {
            if let Some(pos) = candidates.iter().position(|&j| j == c) {
                candidates.remove(pos);
                candidates.insert(0, c);
            }
        }
        for j in candidates {
            let extra = usize::from(cont != Some(j));
            self.used[j] = true;
            self.unused[w] -= 1;
            self.pairs.push((i, j));
            self.run(i + 1, chunks + extra);
            self.pairs.pop();
            self.unused[w] += 1;
            self.used[j] = false;
        }
        self.run(i + 1, chunks);
    }
}

/// Alignment with the maximum number of exact matches and, among those, the
/// fewest chunks. A chunk is a maximal run of matches that are contiguous
/// and in the same order in both strings.
pub fn meteor_alignment<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Alignment {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut h = Vec::with_capacity(hyp.len());
    let mut r = Vec::with_capacity(reference.len());
    for (src, dst) in [(hyp, &mut h), (reference, &mut r)] {
        for t in src {
            let n = ids.len();
            dst.push(*ids.entry(t.as_ref()).or_insert(n));
        }
    }
    let v = ids.len();
    let mut positions = vec![Vec::new(); v];
    let mut unused = vec![0; v];
    for (j, &w) in r.iter().enumerate() {
        positions[w].push(j);
        unused[w] += 1;
    }
    let mut suffix = vec![vec![0; v]; h.len() + 1];
    for i in (0..h.len()).rev() {
        suffix[i] = suffix[i + 1].clone();
        suffix[i][h[i]] += 1;
    }
    let target = suffix[0].iter().zip(&unused).map(|(&a, &b)| a.min(b)).sum();
    let mut s = Search {
        hyp: &h,
        positions,
        suffix,
        unused,
        used: vec![false; r.len()],
        target,
        pairs: Vec::new(),
        best: None,
        nodes: 0,
    };
    s.run(0, 0);
    s.best.unwrap_or(Alignment { pairs: Vec::new(), chunks: 0 })
}

/// Sentence METEOR with exact matching only: `Fmean = 10PR / (R + 9P)`
/// times `1 - 0.5 * frag^3`, `frag = (chunks - 1) / (matches - 1)`.
pub fn meteor_pair<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let a = meteor_alignment(hyp, reference);
    let m = a.pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = if m > 1 {
        (a.chunks - 1) as f64 / (m - 1) as f64
    } else {
        0.0
    };
    fmean * (1.0 - 0.5 * frag.powi(3))
}

/// Mean sentence METEOR-exact.
pub fn meteor_exact<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
    check_aligned(hyps.len(), refs.len())?;
    Ok(hyps.iter().zip(refs).map(|(h, r)| meteor_pair(h, r)).sum::<f64>() / hyps.len() as f64)
}
