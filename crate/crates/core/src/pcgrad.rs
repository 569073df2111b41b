//! Conflict-projected combination of per-task gradients.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// a·b / (‖a‖‖b‖), or 0 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// g - (g·v / ‖v‖²) v; `g` unchanged when `v` is zero.
pub fn project_out(g: &[f64], onto: &[f64]) -> Vec<f64> {
    let nn = dot(onto, onto);
    if nn == 0.0 {
        return g.to_vec();
    }
    let c = dot(g, onto) / nn;
    g.iter().zip(onto).map(|(x, v)| x - c * v).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradients {
    pub gradients: Vec<Vec<f64>>,
    pub rng_seed: u64,
}

impl TaskGradients {
    pub fn combine(&self) -> Result<Vec<f64>> {
        combine_with(&self.gradients, &mut stream_rng(self.rng_seed, Stream::PcGrad))
    }
}

/// For each task, visit the other tasks in a freshly shuffled order and
/// project away the component along any task it conflicts with (negative
/// cosine), always against the unmodified gradient of that task; then sum.
pub fn combine_with<R: Rng>(gradients: &[Vec<f64>], rng: &mut R) -> Result<Vec<f64>> {
    let Some(first) = gradients.first() else {
        return Err(Error::Training("no task gradients to combine".into()));
    };
    let n = first.len();
    if gradients.iter().any(|g| g.len() != n) {
        return Err(Error::Shape("task gradients differ in length".into()));
    }
    if gradients.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Training("non-finite task gradient".into()));
    }
    let mut total = vec![0.0; n];
    for (i, gi) in gradients.iter().enumerate() {
        let mut pc = gi.clone();
        let mut order: Vec<usize> = (0..gradients.len()).filter(|&j| j != i).collect();
        order.shuffle(rng);
        for j in order {
            if cosine_similarity(&pc, &gradients[j]) < 0.0 {
                pc = project_out(&pc, &gradients[j]);
            }
        }
        for (t, p) in total.iter_mut().zip(&pc) {
            *t += p;
        }
    }
    Ok(total)
}

/// Plain sum of the task gradients.
pub fn sum_gradients(gradients: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = gradients.first() else {
        return Err(Error::Training("no task gradients to combine".into()));
    };
    if gradients.iter().any(|g| g.len() != first.len()) {
        return Err(Error::Shape("task gradients differ in length".into()));
    }
    let mut total = vec![0.0; first.len()];
    for g in gradients {
        for (t, x) in total.iter_mut().zip(g) {
            *t += x;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&[1.0, 2.0], &[-1.0, -2.0]) + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 3.0]), 0.0);
    }

    #[test]
    fn projection_cases() {
        let p = project_out(&[1.0, 0.0], &[-1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(project_out(&[1.0, 0.0], &[0.0, 2.0]), vec![1.0, 0.0]);
        let par = project_out(&[2.0, 4.0], &[1.0, 2.0]);
        assert!(par.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn two_task_example() {
        let t = TaskGradients {
            gradients: vec![vec![1.0, 0.0], vec![-1.0, 1.0]],
            rng_seed: 0,
        };
        // [0.5, 0.5] from the first task plus [0, 1] from the second
        let s = t.combine().unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 1.5).abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn single_task_and_no_conflict() {
        let one = TaskGradients {
            gradients: vec![vec![3.0, -1.0]],
            rng_seed: 5,
        };
        assert_eq!(one.combine().unwrap(), vec![3.0, -1.0]);
        let two = TaskGradients {
            gradients: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            rng_seed: 5,
        };
        assert_eq!(two.combine().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let t = TaskGradients {
            gradients: vec![vec![1.0], vec![1.0, 2.0]],
            rng_seed: 0,
        };
        assert!(t.combine().is_err());
        assert!(sum_gradients(&[]).is_err());
    }

    proptest! {
        #[test]
        fn projection_never_grows(g in prop::collection::vec(-10.0f64..10.0, 5), v in prop::collection::vec(-10.0f64..10.0, 5)) {
            let p = project_out(&g, &v);
            prop_assert!(dot(&p, &p) <= dot(&g, &g) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn combine_is_deterministic(gs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..5), seed in any::<u64>()) {
            let t = TaskGradients { gradients: gs, rng_seed: seed };
            prop_assert_eq!(t.combine().unwrap(), t.combine().unwrap());
        }

        #[test]
        fn nonnegative_cosines_give_plain_sum(gs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..5)) {
            let t = TaskGradients { gradients: gs.clone(), rng_seed: 1 };
            prop_assert_eq!(t.combine().unwrap(), sum_gradients(&gs).unwrap());
        }
    }
}
