//! Table-level inequalities: subadditivity of beta over independent pairs,
//! and the perturbation bound `|beta(A, X) - beta(A, Y)| <= 2 P(X != Y)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::Seed;
use crate::error::Result;
use crate::exact::{Axis, JointPmf};
use crate::mixing::{beta_of_joint, AxisSplit};

use super::CheckReport;

pub const EXACT_TOL: f64 = 1e-12;

fn axis(name: String, n: usize) -> Axis {
    Axis::new(name, (0..n).map(|i| i.to_string()).collect())
}

/// Random table on the given shape; about a quarter of the cells are zero.
pub fn random_joint(rng: &mut ChaCha8Rng, shape: &[usize]) -> JointPmf {
    let n: usize = shape.iter().product();
    let mut t: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random::<f64>() })
        .collect();
    if t.iter().all(|&v| v == 0.0) {
        t[0] = 1.0;
    }
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    let total: f64 = t.iter().sum();
    let axes = shape
        .iter()
        .enumerate()
        .map(|(i, &k)| axis(format!("c{i}"), k))
        .collect();
    JointPmf::new(axes, t, (1.0 - total).max(0.0)).expect("normalized table")
}

/// `N <= 3` pairs `(A_n, B_n)`, independent across `n`.
#[derive(Debug, Clone)]
pub struct Lemma21Instance {
    pub pairs: Vec<JointPmf>,
}

pub fn lemma21_instances(count: usize, seed: Seed) -> Vec<Lemma21Instance> {
    (0..count as u64)
        .map(|i| {
            let mut rng = seed.index(i).rng();
            let n = rng.random_range(1..=3usize);
            let pairs = (0..n)
                .map(|_| {
                    let a = rng.random_range(2..=3usize);
                    let b = rng.random_range(2..=3usize);
                    random_joint(&mut rng, &[a, b])
                })
                .collect();
            Lemma21Instance { pairs }
        })
        .collect()
}

/// beta of the combined system and the sum of the pairwise betas.
pub fn lemma21_sides(inst: &Lemma21Instance) -> Result<(f64, f64)> {
    let mut system = inst.pairs[0].clone();
    for p in &inst.pairs[1..] {
        system = JointPmf::product(&system, p)?;
    }
    let n = inst.pairs.len();
    let split = AxisSplit::new((0..n).map(|i| 2 * i).collect(), (0..n).map(|i| 2 * i + 1).collect());
    let lhs = beta_of_joint(&system, &split)?;
    let rhs = inst
        .pairs
        .iter()
        .map(|p| beta_of_joint(p, &AxisSplit::at(1, 2)))
        .sum::<Result<f64>>()?;
    Ok((lhs, rhs))
}

/// For independent pairs, `beta(sum of A_n, sum of B_n) <= sum_n beta(A_n, B_n)`.
pub fn check_lemma21(instances: &[Lemma21Instance]) -> Result<CheckReport> {
    let mut worst: Option<(f64, f64)> = None;
    let mut equal_single = true;
    for inst in instances {
        let (lhs, rhs) = lemma21_sides(inst)?;
        if inst.pairs.len() == 1 && (lhs - rhs).abs() > EXACT_TOL {
            equal_single = false;
        }
        if worst.is_none_or(|(l, r)| rhs - lhs < r - l) {
            worst = Some((lhs, rhs));
        }
    }
    let (lhs, rhs) = worst.unwrap_or((0.0, 0.0));
    let mut r = CheckReport::at_most("lemma21", lhs, rhs, EXACT_TOL)
        .with("instances", instances.len())
        .with("single_pair_equality", equal_single);
    if !equal_single {
        r.status = super::Status::Fail;
    }
    Ok(r)
}

/// Tables over `(A, X, Y)` with `Y` a perturbation of `X`.
pub fn lemma22_instances(count: usize, seed: Seed) -> Vec<JointPmf> {
    (0..count as u64)
        .map(|i| {
            let mut rng = seed.index(i).rng();
            let na = rng.random_range(2..=5usize);
            let nx = rng.random_range(2..=5usize);
            let ax = random_joint(&mut rng, &[na, nx]);
            let eps = rng.random::<f64>() * 0.3;
            let noise = random_joint(&mut rng, &[nx]);
            let axes = vec![axis("A".into(), na), axis("X".into(), nx), axis("Y".into(), nx)];
            JointPmf::from_fn(axes, 0.0, |c| {
                let stay = if c[1] == c[2] { 1.0 - eps } else { 0.0 };
                ax.prob(&[c[0], c[1]]) * (stay + eps * noise.prob(&[c[2]]))
            })
            .expect("normalized table")
        })
        .collect()
}

/// `(|beta(A, X) - beta(A, Y)|, 2 P(X != Y))` for a table over `(A, X, Y)`.
pub fn lemma22_sides(t: &JointPmf) -> Result<(f64, f64)> {
    let bx = beta_of_joint(t, &AxisSplit::new(vec![0], vec![1]))?;
    let by = beta_of_joint(t, &AxisSplit::new(vec![0], vec![2]))?;
    let differ: f64 = t
        .table()
        .iter()
        .enumerate()
        .filter(|(c, _)| {
            let a = t.atom_of(*c);
            a[1] != a[2]
        })
        .map(|(_, p)| p)
        .sum();
    Ok(((bx - by).abs(), 2.0 * differ))
}

pub fn check_lemma22(instances: &[JointPmf]) -> Result<CheckReport> {
    let mut worst: Option<(f64, f64)> = None;
    for t in instances {
        let (lhs, rhs) = lemma22_sides(t)?;
        if worst.is_none_or(|(l, r)| rhs - lhs < r - l) {
            worst = Some((lhs, rhs));
        }
    }
    let (lhs, rhs) = worst.unwrap_or((0.0, 0.0));
    Ok(CheckReport::at_most("lemma22", lhs, rhs, EXACT_TOL).with("instances", instances.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t22() -> JointPmf {
        JointPmf::new(
            vec![axis("a".into(), 2), axis("b".into(), 2)],
            vec![0.4, 0.1, 0.1, 0.4],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn independent_pairs_give_zero() {
        let p = JointPmf::new(
            vec![axis("a".into(), 2), axis("b".into(), 2)],
            vec![0.06, 0.14, 0.24, 0.56],
            0.0,
        )
        .unwrap();
        let (l, r) = lemma21_sides(&Lemma21Instance {
            pairs: vec![p.clone(), p],
        })
        .unwrap();
        assert!(l < 1e-15 && r < 1e-15);
    }

    #[test]
    fn two_copies_of_the_point_three_table() {
        let (l, r) = lemma21_sides(&Lemma21Instance {
            pairs: vec![t22(), t22()],
        })
        .unwrap();
        assert!((r - 0.6).abs() < 1e-15);
        // 1/2 sum over the 16 cells of |p(a1,b1)p(a2,b2) - 1/16|
        let cells = [0.4, 0.1, 0.1, 0.4];
        let mut s = 0.0;
        for x in cells {
            for y in cells {
                s += (x * y - 1.0 / 16.0f64).abs();
            }
        }
        assert!((l - s / 2.0).abs() < 1e-15);
        assert!(l <= r);
    }

    #[test]
    fn single_pair_is_equality() {
        let (l, r) = lemma21_sides(&Lemma21Instance { pairs: vec![t22()] }).unwrap();
        assert!((l - r).abs() < 1e-15);
    }

    #[test]
    fn identical_x_and_y() {
        let t = JointPmf::from_fn(
            vec![axis("A".into(), 2), axis("X".into(), 2), axis("Y".into(), 2)],
            0.0,
            |c| if c[1] == c[2] { t22().prob(&[c[0], c[1]]) } else { 0.0 },
        )
        .unwrap();
        let (l, r) = lemma22_sides(&t).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
    }

    #[test]
    fn perturbed_indicator() {
        // X = A, Y independent of A, P(X != Y) = eps
        let eps = 0.1;
        let t = JointPmf::from_fn(
            vec![axis("A".into(), 2), axis("X".into(), 2), axis("Y".into(), 2)],
            0.0,
            |c| {
                if c[0] != c[1] {
                    return 0.0;
                }
                // Y = 1 w.p. 1/2 regardless of A, agreeing with X on a set of mass 1 - eps
                let pa = 0.5;
                let agree = 1.0 - eps;
                pa * if c[1] == c[2] { agree } else { eps }
            },
        )
        .unwrap();
        let (l, r) = lemma22_sides(&t).unwrap();
        assert!((r - 2.0 * eps).abs() < 1e-15);
        assert!(l <= r + 1e-15);
    }

    #[test]
    fn random_instances_pass() {
        assert!(check_lemma21(&lemma21_instances(200, Seed(1))).unwrap().passed());
        assert!(check_lemma22(&lemma22_instances(200, Seed(2))).unwrap().passed());
    }
}
