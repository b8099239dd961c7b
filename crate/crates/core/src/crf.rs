//! Linear-chain CRF: path scoring, log-partition, negative log-likelihood
//! with exact gradients, and Viterbi decoding.
//!
//! Emissions are an `L×n` matrix (row = tag, column = position). Transitions
//! are an `(L+2)×(L+2)` matrix whose last two indices are the virtual START
//! and STOP tags. Transitions into START, out of STOP, and START→STOP are
//! structurally impossible and stored as `-inf`.

use crate::error::{Error, Result};
use crate::tags::{bio_allows, Tag, NUM_TAGS};
use crate::tensor::Tensor;

/// Index of the virtual START tag for `num_tags` real tags.
pub fn start(num_tags: usize) -> usize {
    num_tags
}

/// Index of the virtual STOP tag for `num_tags` real tags.
pub fn stop(num_tags: usize) -> usize {
    num_tags + 1
}

/// Whether `(from, to)` is a transition that can never occur.
pub fn is_structural(num_tags: usize, from: usize, to: usize) -> bool {
    to == start(num_tags) || from == stop(num_tags) || (from == start(num_tags) && to == stop(num_tags))
}

/// Zero transitions with the structural entries fixed at `-inf`.
pub fn initial_transitions(num_tags: usize) -> Tensor {
    let k = num_tags + 2;
    let mut t = Tensor::zeros(&[k, k]);
    for a in 0..k {
        for b in 0..k {
            if is_structural(num_tags, a, b) {
                t.set(a, b, f64::NEG_INFINITY);
            }
        }
    }
    t
}

/// Additive mask (0 or `-inf`) forbidding transitions that break strict BIO.
pub fn bio_transition_mask() -> Tensor {
    let k = NUM_TAGS + 2;
    let mut m = Tensor::zeros(&[k, k]);
    for (b, &next) in crate::tags::TAGS.iter().enumerate() {
        if !bio_allows(None, next) {
            m.set(start(NUM_TAGS), b, f64::NEG_INFINITY);
        }
        for (a, &prev) in crate::tags::TAGS.iter().enumerate() {
            if !bio_allows(Some(prev), next) {
                m.set(a, b, f64::NEG_INFINITY);
            }
        }
    }
    debug_assert!(bio_allows(Some(Tag::O), Tag::O));
    m
}

fn dims(emissions: &Tensor, transitions: &Tensor) -> Result<(usize, usize)> {
    if emissions.shape().len() != 2 {
        return Err(Error::contract(format!(
            "emissions must be a tags×positions matrix, got {:?}",
            emissions.shape()
        )));
    }
    let (l, n) = (emissions.rows(), emissions.cols());
    if transitions.shape() != [l + 2, l + 2] {
        return Err(Error::shape("crf transitions", emissions.shape(), transitions.shape()));
    }
    Ok((l, n))
}

fn check_labels(labels: &[usize], l: usize, n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::contract(format!(
            "label sequence has length {} but there are {n} positions",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(Error::contract(format!("invalid label index {bad} for {l} tags")));
    }
    Ok(())
}

fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Score of one label path including START/STOP boundary transitions.
pub fn crf_score(emissions: &Tensor, transitions: &Tensor, labels: &[usize]) -> Result<f64> {
    let (l, n) = dims(emissions, transitions)?;
    check_labels(labels, l, n)?;
    let mut score = transitions.get(start(l), labels[0]);
    for (i, &y) in labels.iter().enumerate() {
        score += emissions.get(y, i);
        if i + 1 < n {
            score += transitions.get(y, labels[i + 1]);
        }
    }
    Ok(score + transitions.get(labels[n - 1], stop(l)))
}

/// Forward-algorithm log-space table: `alpha[i][y]` is the log total score of
/// all prefixes ending in `y` at position `i`, emission included.
fn forward_table(e: &Tensor, t: &Tensor, l: usize, n: usize) -> Vec<Vec<f64>> {
    let mut alpha = vec![vec![0.0; l]; n];
    for y in 0..l {
        alpha[0][y] = t.get(start(l), y) + e.get(y, 0);
    }
    for i in 1..n {
        for y in 0..l {
            let prev = &alpha[i - 1];
            alpha[i][y] = e.get(y, i) + logsumexp((0..l).map(|k| prev[k] + t.get(k, y)));
        }
    }
    alpha
}

/// `beta[i][y]`: log total score of all suffixes after position `i` given
/// tag `y` at `i`, STOP included, emission at `i` excluded.
fn backward_table(e: &Tensor, t: &Tensor, l: usize, n: usize) -> Vec<Vec<f64>> {
    let mut beta = vec![vec![0.0; l]; n];
    for y in 0..l {
        beta[n - 1][y] = t.get(y, stop(l));
    }
    for i in (0..n - 1).rev() {
        for y in 0..l {
            let next = &beta[i + 1];
            beta[i][y] = logsumexp((0..l).map(|k| t.get(y, k) + e.get(k, i + 1) + next[k]));
        }
    }
    beta
}

/// Log of the sum of `exp(score)` over all `L^n` label paths.
pub fn crf_log_partition(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    let (l, n) = dims(emissions, transitions)?;
    let alpha = forward_table(emissions, transitions, l, n);
    Ok(logsumexp((0..l).map(|y| alpha[n - 1][y] + transitions.get(y, stop(l)))))
}

/// `log Z - score(labels)`.
pub fn crf_nll(emissions: &Tensor, transitions: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(crf_log_partition(emissions, transitions)? - crf_score(emissions, transitions, labels)?)
}

pub(crate) struct NllOutput {
    pub loss: f64,
    pub grad_emissions: Tensor,
    pub grad_transitions: Tensor,
}

/// NLL together with its gradients: expected feature counts under the
/// model minus the gold path's counts.
pub(crate) fn nll_with_gradients(emissions: &Tensor, transitions: &Tensor, labels: &[usize]) -> Result<NllOutput> {
    let (l, n) = dims(emissions, transitions)?;
    check_labels(labels, l, n)?;
    let alpha = forward_table(emissions, transitions, l, n);
    let beta = backward_table(emissions, transitions, l, n);
    let log_z = logsumexp((0..l).map(|y| alpha[n - 1][y] + transitions.get(y, stop(l))));
    if log_z == f64::NEG_INFINITY {
        return Err(Error::Numerical("every label path has score -inf".into()));
    }
    let gold = crf_score(emissions, transitions, labels)?;

    let mut ge = Tensor::zeros(emissions.shape());
    let mut gt = Tensor::zeros(transitions.shape());
    for i in 0..n {
        for y in 0..l {
            let p = (alpha[i][y] + beta[i][y] - log_z).exp();
            ge.set(y, i, p);
            if i == 0 {
                gt.set(start(l), y, gt.get(start(l), y) + p);
            }
            if i == n - 1 {
                gt.set(y, stop(l), gt.get(y, stop(l)) + p);
            }
        }
        if i + 1 < n {
            for a in 0..l {
                for b in 0..l {
                    let lp = alpha[i][a] + transitions.get(a, b) + emissions.get(b, i + 1) + beta[i + 1][b] - log_z;
                    gt.set(a, b, gt.get(a, b) + lp.exp());
                }
            }
        }
    }
    for (i, &y) in labels.iter().enumerate() {
        ge.set(y, i, ge.get(y, i) - 1.0);
        if i + 1 < n {
            let next = labels[i + 1];
            gt.set(y, next, gt.get(y, next) - 1.0);
        }
    }
    gt.set(start(l), labels[0], gt.get(start(l), labels[0]) - 1.0);
    gt.set(labels[n - 1], stop(l), gt.get(labels[n - 1], stop(l)) - 1.0);

    Ok(NllOutput {
        loss: log_z - gold,
        grad_emissions: ge,
        grad_transitions: gt,
    })
}

/// Highest-scoring label path. Among exactly tied optima the
/// lexicographically smallest index sequence wins.
pub fn viterbi_decode(emissions: &Tensor, transitions: &Tensor) -> Result<Vec<usize>> {
    let (l, n) = dims(emissions, transitions)?;
    // best[i][y]: best score of positions i..n given tag y at i, emission at i
    // and the STOP transition included.
    let mut best = vec![vec![0.0; l]; n];
    for y in 0..l {
        best[n - 1][y] = emissions.get(y, n - 1) + transitions.get(y, stop(l));
    }
    for i in (0..n - 1).rev() {
        for y in 0..l {
            let tail = (0..l)
                .map(|k| transitions.get(y, k) + best[i + 1][k])
                .fold(f64::NEG_INFINITY, f64::max);
            best[i][y] = emissions.get(y, i) + tail;
        }
    }
    // Walk forward taking the first tag that attains the optimum.
    let mut path = Vec::with_capacity(n);
    let mut prev = start(l);
    for row in &best {
        let candidates = (0..l).map(|y| transitions.get(prev, y) + row[y]);
        let top = candidates.clone().fold(f64::NEG_INFINITY, f64::max);
        let y = candidates.clone().position(|v| v == top).unwrap_or(0);
        path.push(y);
        prev = y;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every path of length `n` over `l` tags, in lexicographic order.
    fn all_paths(l: usize, n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..l).map(move |y| {
                        let mut q = p.clone();
                        q.push(y);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn random_instance(rng: &mut ChaCha8Rng, l: usize, n: usize) -> (Tensor, Tensor) {
        let mut e = Tensor::zeros(&[l, n]);
        for v in e.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let mut t = initial_transitions(l);
        for a in 0..l + 2 {
            for b in 0..l + 2 {
                if !is_structural(l, a, b) {
                    t.set(a, b, rng.gen_range(-2.0..2.0));
                }
            }
        }
        (e, t)
    }

    #[test]
    fn zero_scores() {
        let e = Tensor::zeros(&[3, 4]);
        let t = initial_transitions(3);
        assert_eq!(crf_score(&e, &t, &[0, 1, 2, 0]).unwrap(), 0.0);
        let z = crf_log_partition(&e, &t).unwrap();
        assert!((z - 4.0 * 3f64.ln()).abs() < 1e-12);
        assert!((crf_nll(&e, &t, &[2, 2, 1, 0]).unwrap() - 4.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_position_score_and_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (e, t) = random_instance(&mut rng, 4, 1);
        for y in 0..4 {
            let s = crf_score(&e, &t, &[y]).unwrap();
            assert_eq!(s, t.get(start(4), y) + e.get(y, 0) + t.get(y, stop(4)));
        }
        let expect = logsumexp((0..4).map(|y| t.get(start(4), y) + e.get(y, 0) + t.get(y, stop(4))));
        assert!((crf_log_partition(&e, &t).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn two_position_hand_sum() {
        let e = Tensor::from_rows(&[[0.5, -1.0], [2.0, 0.25]]);
        let mut t = initial_transitions(2);
        // START=2, STOP=3
        t.set(2, 0, 0.1);
        t.set(2, 1, -0.3);
        t.set(0, 0, 0.7);
        t.set(0, 1, -1.2);
        t.set(1, 0, 0.4);
        t.set(1, 1, 0.9);
        t.set(0, 3, -0.6);
        t.set(1, 3, 0.2);
        // path [1, 0]: START->1 (-0.3) + e(1,0)=2.0 + T(1,0)=0.4 + e(0,1)=-1.0 + T(0,STOP)=-0.6
        let s = crf_score(&e, &t, &[1, 0]).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn partition_and_viterbi_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let l = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=6);
            let (e, t) = random_instance(&mut rng, l, n);
            let paths = all_paths(l, n);
            let scores: Vec<f64> = paths.iter().map(|p| crf_score(&e, &t, p).unwrap()).collect();
            let brute_z = logsumexp(scores.iter().copied());
            assert!((crf_log_partition(&e, &t).unwrap() - brute_z).abs() < 1e-9);
            let mut best = 0;
            for (k, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = k;
                }
            }
            assert_eq!(viterbi_decode(&e, &t).unwrap(), paths[best]);
            let total: f64 = scores.iter().map(|s| (s - brute_z).exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn viterbi_ties_pick_lexicographic_minimum() {
        let e = Tensor::zeros(&[3, 4]);
        let t = initial_transitions(3);
        assert_eq!(viterbi_decode(&e, &t).unwrap(), vec![0, 0, 0, 0]);

        // Tags 1 and 2 tie everywhere and beat tag 0.
        let e = Tensor::from_rows(&[[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(viterbi_decode(&e, &t).unwrap(), vec![1, 1]);
    }

    #[test]
    fn viterbi_decoupled_is_argmax() {
        let e = Tensor::from_rows(&[[3.0, 0.0, 0.0], [0.0, 0.0, 2.0], [0.0, 1.0, 0.0]]);
        let t = initial_transitions(3);
        assert_eq!(viterbi_decode(&e, &t).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn hard_constraint_is_respected() {
        let b_per = Tag::B(crate::tags::EntityType::Per).index();
        let i_loc = Tag::I(crate::tags::EntityType::Loc).index();
        let mut e = Tensor::zeros(&[NUM_TAGS, 2]);
        e.set(b_per, 0, 5.0);
        e.set(i_loc, 1, 5.0);
        let mut t = initial_transitions(NUM_TAGS);
        let path = viterbi_decode(&e, &t).unwrap();
        assert_eq!(path, vec![b_per, i_loc]);
        t.set(b_per, i_loc, f64::NEG_INFINITY);
        let path = viterbi_decode(&e, &t).unwrap();
        assert!(path.windows(2).all(|w| !(w[0] == b_per && w[1] == i_loc)));
    }

    #[test]
    fn bio_mask_blocks_invalid_paths() {
        let mask = bio_transition_mask();
        let t = initial_transitions(NUM_TAGS).add(&mask).unwrap();
        let mut e = Tensor::zeros(&[NUM_TAGS, 3]);
        // Emissions push toward O, I-ORG, I-ORG, which strict BIO forbids.
        e.set(0, 0, 3.0);
        e.set(Tag::I(crate::tags::EntityType::Org).index(), 1, 3.0);
        e.set(Tag::I(crate::tags::EntityType::Org).index(), 2, 3.0);
        let path = viterbi_decode(&e, &t).unwrap();
        let mut prev = None;
        for &y in &path {
            let tag = Tag::from_index(y).unwrap();
            assert!(bio_allows(prev, tag));
            prev = Some(tag);
        }
    }

    #[test]
    fn emission_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (e, t) = random_instance(&mut rng, 4, 5);
        let y = [0, 3, 1, 1, 2];
        let c = 1.7;
        let shifted = e.map(|v| v + c);
        let ds = crf_score(&shifted, &t, &y).unwrap() - crf_score(&e, &t, &y).unwrap();
        let dz = crf_log_partition(&shifted, &t).unwrap() - crf_log_partition(&e, &t).unwrap();
        assert!((ds - 5.0 * c).abs() < 1e-9);
        assert!((dz - 5.0 * c).abs() < 1e-9);
        assert!((crf_nll(&shifted, &t, &y).unwrap() - crf_nll(&e, &t, &y).unwrap()).abs() < 1e-9);
        assert_eq!(viterbi_decode(&shifted, &t).unwrap(), viterbi_decode(&e, &t).unwrap());
    }

    #[test]
    fn dominating_path_has_small_loss() {
        let l = 3;
        let y = [2, 0, 1];
        let mut e = Tensor::zeros(&[l, 3]);
        for (i, &tag) in y.iter().enumerate() {
            e.set(tag, i, 12.0);
        }
        let t = initial_transitions(l);
        let loss = crf_nll(&e, &t, &y).unwrap();
        assert_eq!(viterbi_decode(&e, &t).unwrap(), y);
        let scores: Vec<f64> = all_paths(l, 3).iter().map(|p| crf_score(&e, &t, p).unwrap()).collect();
        let brute = logsumexp(scores.iter().copied()) - crf_score(&e, &t, &y).unwrap();
        assert!((loss - brute).abs() < 1e-12);
        assert!(loss > 0.0 && loss < 1e-4);
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (e, t) = random_instance(&mut rng, 4, 4);
        let y = [1, 1, 3, 0];
        let out = nll_with_gradients(&e, &t, &y).unwrap();
        let h = 1e-5;
        for k in 0..e.len() {
            let mut plus = e.clone();
            plus.data_mut()[k] += h;
            let mut minus = e.clone();
            minus.data_mut()[k] -= h;
            let fd = (crf_nll(&plus, &t, &y).unwrap() - crf_nll(&minus, &t, &y).unwrap()) / (2.0 * h);
            assert!((fd - out.grad_emissions.data()[k]).abs() < 1e-7);
        }
        for k in 0..t.len() {
            if !t.data()[k].is_finite() {
                assert_eq!(out.grad_transitions.data()[k], 0.0);
                continue;
            }
            let mut plus = t.clone();
            plus.data_mut()[k] += h;
            let mut minus = t.clone();
            minus.data_mut()[k] -= h;
            let fd = (crf_nll(&e, &plus, &y).unwrap() - crf_nll(&e, &minus, &y).unwrap()) / (2.0 * h);
            assert!((fd - out.grad_transitions.data()[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn invalid_labels_rejected() {
        let e = Tensor::zeros(&[3, 2]);
        let t = initial_transitions(3);
        assert!(crf_score(&e, &t, &[0, 3]).is_err());
        assert!(crf_score(&e, &t, &[0]).is_err());
        assert!(crf_log_partition(&e, &initial_transitions(4)).is_err());
    }
}
