//! Top-k Plackett-Luce probabilities and the list-wise cross-entropy loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, softmax, Scalar};

/// Ordered tuple of distinct item indices occupying ranks `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopKGroup(Vec<usize>);

impl TopKGroup {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.len() > n {
            return Err(Error::InvalidArgument(format!("group of {} exceeds list of {n}", indices.len())));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!("group index {i} out of range for {n} items")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("duplicate index {i} in top-k group")));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

/// Probability that the items of `group` occupy the top ranks in that order:
/// at each step, the chosen item's exp-score over the sum of exp-scores of
/// all items not yet placed.
pub fn topk_group_probability<T: Scalar>(scores: &[T], group: &TopKGroup) -> Result<T> {
    let n = scores.len();
    let group = TopKGroup::new(group.0.clone(), n)?;
    let mut placed = vec![false; n];
    let mut log_p = T::zero();
    for &j in group.indices() {
        let remaining = scores.iter().zip(&placed).filter(|(_, &p)| !p).map(|(&s, _)| s);
        log_p += scores[j] - log_sum_exp(remaining.collect::<Vec<_>>());
        placed[j] = true;
    }
    Ok(log_p.exp())
}

/// `n! / (n - k)!`, or `None` on overflow.
pub fn count_groups(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    (0..k).try_fold(1u64, |acc, i| acc.checked_mul((n - i) as u64))
}

/// Every top-k group over `n` items, in lexicographic order.
pub fn enumerate_groups(n: usize, k: usize) -> Vec<TopKGroup> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<TopKGroup>) {
        if prefix.len() == k {
            out.push(TopKGroup(prefix.clone()));
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                rec(n, k, prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(n, k, &mut Vec::with_capacity(k), &mut vec![false; n], &mut out);
    }
    out
}

pub const DEFAULT_ENUMERATION_CAP: usize = 5_000;

/// Settings of the list-wise loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListLoss {
    pub k: usize,
    /// Largest number of top-k groups evaluated exactly; beyond it the loss uses k = 1.
    pub enumeration_cap: usize,
    /// Grades are multiplied by this before entering the target distribution.
    pub label_temperature: f64,
}

impl Default for ListLoss {
    fn default() -> Self {
        Self {
            k: 10,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            label_temperature: 1.0,
        }
    }
}

impl ListLoss {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    /// Cutoff actually used for a list of `n` items.
    pub fn effective_k(&self, n: usize) -> usize {
        match count_groups(n, self.k) {
            Some(c) if c <= self.enumeration_cap as u64 => self.k,
            _ => 1,
        }
    }

    pub fn loss<T: Scalar>(&self, scores: &[T], labels: &[T]) -> Result<T> {
        Ok(self.evaluate(scores, labels, false)?.0)
    }

    /// Loss and its gradient with respect to every score.
    pub fn loss_and_gradient<T: Scalar>(&self, scores: &[T], labels: &[T]) -> Result<(T, Vec<T>)> {
        self.evaluate(scores, labels, true)
    }

    fn evaluate<T: Scalar>(&self, scores: &[T], labels: &[T], want_grad: bool) -> Result<(T, Vec<T>)> {
        let n = scores.len();
        if labels.len() != n {
            return Err(Error::Dimension(format!("{n} scores but {} labels", labels.len())));
        }
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidArgument(format!("top-k cutoff {} invalid for list of {n}", self.k)));
        }
        let temp = T::lit(self.label_temperature);
        let target: Vec<T> = labels.iter().map(|&y| y * temp).collect();
        let k = self.effective_k(n);
        if k == 1 {
            return top_one(scores, &target, want_grad);
        }
        let mut walk = Walk {
            z: scores,
            y: &target,
            k,
            want_grad,
            placed: vec![false; n],
            loss: T::zero(),
            grad: vec![T::zero(); n],
        };
        walk.descend(0, T::zero());
        Ok((walk.loss, walk.grad))
    }
}

fn top_one<T: Scalar>(z: &[T], y: &[T], want_grad: bool) -> Result<(T, Vec<T>)> {
    let py = softmax(y)?;
    let lz = log_sum_exp(z.iter().copied());
    let loss = -py.iter().zip(z).map(|(&p, &s)| p * (s - lz)).sum::<T>();
    let grad = if want_grad {
        softmax(z)?.into_iter().zip(&py).map(|(pz, &p)| pz - p).collect()
    } else {
        Vec::new()
    };
    Ok((loss, grad))
}

/// Depth-first walk over group prefixes. The log of a group probability is a
/// sum of per-step terms and the target distribution of a prefix equals the
/// sum over its completions, so each step term is weighted by the target
/// probability of the prefix ending there.
struct Walk<'a, T> {
    z: &'a [T],
    y: &'a [T],
    k: usize,
    want_grad: bool,
    placed: Vec<bool>,
    loss: T,
    grad: Vec<T>,
}

impl<T: Scalar> Walk<'_, T> {
    fn descend(&mut self, depth: usize, log_py_prefix: T) {
        if depth == self.k {
            return;
        }
        let remaining: Vec<usize> = (0..self.z.len()).filter(|&i| !self.placed[i]).collect();
        let lz = log_sum_exp(remaining.iter().map(|&i| self.z[i]).collect::<Vec<_>>());
        let ly = log_sum_exp(remaining.iter().map(|&i| self.y[i]).collect::<Vec<_>>());
        if self.want_grad {
            let py_prefix = log_py_prefix.exp();
            for &m in &remaining {
                self.grad[m] += py_prefix * (self.z[m] - lz).exp();
            }
        }
        for &j in &remaining {
            let log_py = log_py_prefix + self.y[j] - ly;
            let py = log_py.exp();
            self.loss -= py * (self.z[j] - lz);
            if self.want_grad {
                self.grad[j] -= py;
            }
            self.placed[j] = true;
            self.descend(depth + 1, log_py);
            self.placed[j] = false;
        }
    }
}

/// List-wise loss with cutoff `k` and default settings.
pub fn listnet_loss<T: Scalar>(scores: &[T], labels: &[T], k: usize) -> Result<T> {
    ListLoss::with_k(k).loss(scores, labels)
}

/// Gradient of [`listnet_loss`] with respect to the scores.
pub fn listnet_backward<T: Scalar>(scores: &[T], labels: &[T], k: usize) -> Result<Vec<T>> {
    Ok(ListLoss::with_k(k).loss_and_gradient(scores, labels)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_item_group_has_probability_one() {
        let g = TopKGroup::new(vec![0], 1).unwrap();
        assert_eq!(topk_group_probability(&[3.7f64], &g).unwrap(), 1.0);
    }

    #[test]
    fn two_items_top_one() {
        let g = TopKGroup::new(vec![1], 2).unwrap();
        let p = topk_group_probability(&[0.0f64, 2f64.ln()], &g).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_indices_rejected() {
        assert!(TopKGroup::new(vec![1, 1], 3).is_err());
        assert!(TopKGroup::new(vec![3], 3).is_err());
    }

    #[test]
    fn pairs_over_four_items_sum_to_one() {
        let s = [0.3f64, -1.2, 2.0, 0.7];
        let groups = enumerate_groups(4, 2);
        assert_eq!(groups.len(), 12);
        let total: f64 = groups.iter().map(|g| topk_group_probability(&s, g).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn group_counts() {
        assert_eq!(count_groups(4, 2), Some(12));
        assert_eq!(count_groups(10, 10), Some(3_628_800));
        assert_eq!(count_groups(3, 4), Some(0));
        assert_eq!(count_groups(50, 10), Some(37_276_043_023_296_000));
        assert_eq!(count_groups(100_000, 10), None);
    }

    #[test]
    fn loss_of_single_item_is_zero() {
        assert_eq!(listnet_loss(&[4.2f64], &[1.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn matching_scores_give_label_entropy() {
        let y = [0.0f64, 2.0];
        let l = listnet_loss(&y, &y, 1).unwrap();
        let p = softmax(&y).unwrap();
        let entropy: f64 = -p.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((l - entropy).abs() < 1e-14);
    }

    #[test]
    fn k_larger_than_list_is_error() {
        assert!(listnet_loss(&[1.0f64, 2.0], &[0.0, 1.0], 3).is_err());
        assert!(listnet_loss(&[1.0f64, 2.0], &[0.0], 1).is_err());
    }

    #[test]
    fn gradient_vanishes_at_matching_distribution() {
        let y = [0.0f64, 1.0, 2.0, 0.0];
        let z: Vec<f64> = y.iter().map(|v| v + 5.0).collect();
        let g = listnet_backward(&z, &y, 1).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn cap_falls_back_to_top_one() {
        let loss = ListLoss {
            k: 3,
            enumeration_cap: 10,
            label_temperature: 1.0,
        };
        let z = [0.1f64, 0.4, -0.3, 1.0];
        let y = [0.0f64, 1.0, 0.0, 2.0];
        assert_eq!(loss.effective_k(4), 1);
        assert_eq!(loss.loss(&z, &y).unwrap(), listnet_loss(&z, &y, 1).unwrap());
    }
}
