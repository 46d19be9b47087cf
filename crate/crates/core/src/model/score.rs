use crate::corpus::{BeliefState, Ontology};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;

/// Raw (pre-sigmoid) scores for every informable pair and requestable slot,
/// indexed in ontology order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub informable: Vec<Vec<f64>>,
    pub requests: Vec<f64>,
}

impl ScoreTable {
    pub fn constant(ontology: &Ontology, value: f64) -> Self {
        ScoreTable {
            informable: ontology
                .informable
                .values()
                .map(|vs| vec![value; vs.len()])
                .collect(),
            requests: vec![value; ontology.requestable.len()],
        }
    }

    /// `+s` on the goals of `state`, `-s` everywhere else.
    pub fn from_state(ontology: &Ontology, state: &BeliefState, s: f64) -> Result<Self> {
        let mut t = Self::constant(ontology, -s);
        for (slot, value) in &state.goals {
            let (si, vi) = ontology
                .value_index(slot, value)
                .ok_or_else(|| Error::Ontology(format!("`{slot}={value}` is not in the ontology")))?;
            t.informable[si][vi] = s;
        }
        for r in &state.requests {
            let ri = ontology
                .request_index(r)
                .ok_or_else(|| Error::Ontology(format!("`{r}` is not requestable")))?;
            t.requests[ri] = s;
        }
        Ok(t)
    }

    pub fn matches(&self, ontology: &Ontology) -> bool {
        self.informable.len() == ontology.informable.len()
            && self
                .informable
                .iter()
                .zip(ontology.informable.values())
                .all(|(s, v)| s.len() == v.len())
            && self.requests.len() == ontology.requestable.len()
    }

    pub fn get(&self, ontology: &Ontology, slot: &str, value: &str) -> Option<f64> {
        let (si, vi) = ontology.value_index(slot, value)?;
        Some(self.informable[si][vi])
    }
}

/// `y = W_y^T (r ⊙ g)`.
pub fn turn_score(r: &[f64], g: &[f64], w_y: &[f64]) -> Result<f64> {
    if r.len() != w_y.len() || g.len() != w_y.len() {
        return Err(Error::Shape(format!(
            "turn score over H={} got r of {} and g of {}",
            w_y.len(),
            r.len(),
            g.len()
        )));
    }
    Ok(r.iter().zip(g).zip(w_y).map(|((r, g), w)| r * g * w).sum())
}

/// `ŷ = λ y_now + (1 - λ) y_prev`.
pub fn cumulative_score(y_now: f64, y_prev: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must be in [0,1], got {lambda}")));
    }
    Ok(lambda * y_now + (1.0 - lambda) * y_prev)
}

/// Per slot, the first highest-scoring value if its probability reaches
/// `theta_inf`; every requestable slot whose probability reaches `theta_req`.
pub fn predict_state(scores: &ScoreTable, ontology: &Ontology, theta_inf: f64, theta_req: f64) -> BeliefState {
    debug_assert!(scores.matches(ontology));
    let mut state = BeliefState::default();
    for ((slot, values), s) in ontology.informable.iter().zip(&scores.informable) {
        let mut best: Option<usize> = None;
        for (i, v) in s.iter().enumerate() {
            if best.is_none_or(|b| *v > s[b]) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            if sigmoid(s[b]) >= theta_inf {
                state.goals.insert(slot.clone(), values[b].clone());
            }
        }
    }
    for (r, s) in ontology.requestable.iter().zip(&scores.requests) {
        if sigmoid(*s) >= theta_req {
            state.requests.insert(r.clone());
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use indexmap::IndexMap;
    use proptest::prelude::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn ontology() -> Ontology {
        let mut inf = IndexMap::new();
        inf.insert("food".to_string(), vec!["thai".into(), "greek".into(), "french".into()]);
        Ontology::new(inf, vec!["phone".into(), "address".into(), "postcode".into()]).unwrap()
    }

    #[test]
    fn turn_score_cases() {
        assert_eq!(turn_score(&[1.0, 2.0], &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(turn_score(&[1.0; 3], &[1.0; 3], &[0.5, -2.0, 7.0]).unwrap(), 5.5);
        assert_eq!(turn_score(&[3.0, 4.0], &[5.0, 6.0], &[1.0, 2.0]).unwrap(), 63.0);
        assert!(turn_score(&[1.0], &[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cumulative_score_cases() {
        assert_eq!(cumulative_score(3.0, -2.0, 1.0).unwrap(), 3.0);
        assert_eq!(cumulative_score(3.0, -2.0, 0.0).unwrap(), -2.0);
        assert_eq!(cumulative_score(1.0, 0.0, 0.5).unwrap(), 0.5);
        assert!(cumulative_score(1.0, 0.0, -0.1).is_err());
        assert!(cumulative_score(1.0, 0.0, 1.1).is_err());
    }

    #[test]
    fn recursion_unrolls_to_closed_form() {
        for &lambda in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let (y, y0) = (1.7, -6.0);
            let mut s = y0;
            for t in 1..=10 {
                s = cumulative_score(y, s, lambda).unwrap();
                let keep = (1.0f64 - lambda).powi(t);
                assert_abs_diff_eq!(s, y * (1.0 - keep) + keep * y0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn predict_state_cases() {
        let o = ontology();
        let mut t = ScoreTable::constant(&o, -5.0);
        t.informable[0] = vec![logit(0.9), logit(0.2), logit(0.1)];
        t.requests = vec![logit(0.8), logit(0.6), logit(0.3)];
        let s = predict_state(&t, &o, 0.5, 0.5);
        assert_eq!(s.goal("food"), Some("thai"));
        assert_eq!(
            s.requests.iter().cloned().collect::<Vec<_>>(),
            vec!["address".to_string(), "phone".to_string()]
        );

        t.informable[0] = vec![logit(0.4), logit(0.3), logit(0.1)];
        assert_eq!(predict_state(&t, &o, 0.5, 0.5).goal("food"), None);
    }

    #[test]
    fn ties_go_to_ontology_order() {
        let o = ontology();
        let mut t = ScoreTable::constant(&o, -5.0);
        t.informable[0] = vec![1.0, 3.0, 3.0];
        assert_eq!(predict_state(&t, &o, 0.5, 0.5).goal("food"), Some("greek"));
    }

    #[test]
    fn from_state_marks_gold_pairs() {
        let o = ontology();
        let mut st = BeliefState::default();
        st.goals.insert("food".into(), "greek".into());
        let t = ScoreTable::from_state(&o, &st, 6.0).unwrap();
        assert_eq!(t.informable[0], vec![-6.0, 6.0, -6.0]);
        st.goals.insert("food".into(), "klingon".into());
        assert!(ScoreTable::from_state(&o, &st, 6.0).is_err());
    }

    proptest! {
        #[test]
        fn argmax_survives_positive_scaling(
            scores in proptest::collection::vec(-10.0f64..10.0, 3),
            c in 0.01f64..100.0,
        ) {
            let o = ontology();
            let mut a = ScoreTable::constant(&o, 0.0);
            a.informable[0] = scores.clone();
            let mut b = a.clone();
            b.informable[0] = scores.iter().map(|s| s * c).collect();
            // thresholds at zero so every slot is assigned and only the argmax is compared
            let sa = predict_state(&a, &o, 0.0, 0.5);
            let sb = predict_state(&b, &o, 0.0, 0.5);
            prop_assert_eq!(sa.goal("food"), sb.goal("food"));
        }
    }
}
