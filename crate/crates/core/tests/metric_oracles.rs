//! Brute-force oracles for the ranking metrics: ideals are maxima over every
//! permutation of the judged pool.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use divlex::corpus::{GradedTriple, QueryCase};
use divlex::metrics::{alpha_ndcg, dcg, ndcg, ndcg_ia};
use divlex::Grade;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn gain(g: u8) -> f64 {
    2f64.powi(g as i32) - 1.0
}

fn dcg_of(grades: &[u8], order: &[usize], k: usize) -> f64 {
    order.iter().take(k).enumerate().map(|(r, &d)| gain(grades[d]) / ((r + 2) as f64).log2()).sum()
}

fn best<F: Fn(&[usize]) -> f64>(n: usize, f: F) -> f64 {
    permutations(n).iter().map(|p| f(p)).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
struct Case {
    probs: Vec<f64>,
    grades: Vec<Vec<Option<u8>>>,
    order: Vec<usize>,
    k: usize,
    alpha: f64,
}

impl Case {
    fn grade(&self, d: usize, i: usize) -> u8 {
        self.grades[d][i].unwrap_or(0)
    }

    fn column(&self, i: usize) -> Vec<u8> {
        (0..self.grades.len()).map(|d| self.grade(d, i)).collect()
    }

    fn query(&self) -> QueryCase {
        QueryCase {
            id: "q".into(),
            sentences: vec!["s.".into()],
            ccs: (0..self.probs.len()).collect::<BTreeSet<_>>(),
            intent_dist: self.probs.iter().copied().enumerate().collect::<BTreeMap<_, _>>(),
        }
    }

    fn triples(&self) -> Vec<GradedTriple> {
        let mut out = Vec::new();
        for (d, row) in self.grades.iter().enumerate() {
            for (i, g) in row.iter().enumerate() {
                if let Some(g) = g {
                    out.push(GradedTriple {
                        query_id: "q".into(),
                        charge_id: i,
                        doc_id: format!("d{d}"),
                        grade: Grade::new(*g).unwrap(),
                    });
                }
            }
        }
        out
    }

    fn ids(&self) -> Vec<String> {
        self.order.iter().map(|d| format!("d{d}")).collect()
    }

    fn oracle_ndcg_ia(&self) -> f64 {
        let total: f64 = self.probs.iter().filter(|&&p| p > 0.0).sum();
        let n = self.grades.len();
        (0..self.probs.len())
            .filter(|&i| self.probs[i] > 0.0)
            .map(|i| {
                let col = self.column(i);
                let ideal = best(n, |p| dcg_of(&col, p, self.k));
                if ideal == 0.0 {
                    0.0
                } else {
                    self.probs[i] / total * dcg_of(&col, &self.order, self.k) / ideal
                }
            })
            .sum()
    }

    fn alpha_dcg(&self, order: &[usize]) -> f64 {
        let mut seen = vec![0; self.probs.len()];
        let mut total = 0.0;
        for (r, &d) in order.iter().take(self.k).enumerate() {
            let mut g = 0.0;
            for (i, s) in seen.iter_mut().enumerate() {
                if self.probs[i] > 0.5 && self.grade(d, i) >= 2 {
                    g += (1.0 - self.alpha).powi(*s);
                    *s += 1;
                }
            }
            total += g / ((r + 2) as f64).log2();
        }
        total
    }

    fn oracle_alpha_ndcg(&self) -> f64 {
        let ideal = best(self.grades.len(), |p| self.alpha_dcg(p));
        if ideal == 0.0 {
            0.0
        } else {
            self.alpha_dcg(&self.order) / ideal
        }
    }
}

fn prob() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.5), Just(1.0 / 3.0), Just(1.0), 0.0..=1.0]
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..=6, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prob(), m),
            prop::collection::vec(prop::collection::vec(prop::option::weighted(0.7, 0u8..=3), m), n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            1..=n + 1,
            prop_oneof![Just(0.5), 0.0..=1.0],
        )
            .prop_map(|(probs, grades, order, k, alpha)| Case { probs, grades, order, k, alpha })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ndcg_matches_oracle(grades in prop::collection::vec(0u8..=3, 0..=6), k in 1usize..=7) {
        let gs: Vec<Grade> = grades.iter().map(|&g| Grade::new(g).unwrap()).collect();
        let identity: Vec<usize> = (0..grades.len()).collect();
        prop_assert!((dcg(&gs, k) - dcg_of(&grades, &identity, k)).abs() < 1e-12);
        let ideal = best(grades.len(), |p| dcg_of(&grades, p, k));
        let want = if ideal == 0.0 { 0.0 } else { dcg_of(&grades, &identity, k) / ideal };
        let got = ndcg(&gs, k);
        prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
    }

    #[test]
    fn ndcg_ia_matches_oracle(c in case()) {
        let ids = c.ids();
        let ranked: Vec<&str> = ids.iter().map(String::as_str).collect();
        let got = ndcg_ia(&c.query(), &ranked, &c.triples(), c.k);
        let want = c.oracle_ndcg_ia();
        prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
    }

    #[test]
    fn alpha_ndcg_matches_oracle(c in case()) {
        let ids = c.ids();
        let ranked: Vec<&str> = ids.iter().map(String::as_str).collect();
        let got = alpha_ndcg(&c.query(), &ranked, &c.triples(), c.k, c.alpha);
        let want = c.oracle_alpha_ndcg();
        prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
    }
}

#[test]
fn graded_example() {
    let g: Vec<Grade> = [1, 3].iter().map(|&x| Grade::new(x).unwrap()).collect();
    let want = (1.0 + 7.0 / 3f64.log2()) / (7.0 + 1.0 / 3f64.log2());
    assert!((ndcg(&g, 2) - want).abs() < 1e-15);
    assert!((ndcg(&g, 2) - 0.7097).abs() < 2e-4);
}
