//! Gate matching: the student's context gate on mapped target terms should
//! reproduce the teacher's gate on the source terms.

use indexmap::IndexSet;

use crate::corpus::{Dialog, Ontology, OntologyMapping, SystemActs};
use crate::error::{Error, Result};
use crate::model::gate::{act_terms, project_acts, relevance_backward, relevance_gate, ActGradients, GateView};
use crate::model::{context_gate, names, ActVectors, Lexicon, NbtModel};
use crate::numeric::Gradients;

/// Acts plus the candidate under consideration; requestable slots have no
/// value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GateTuple {
    pub acts: SystemActs,
    pub slot: String,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateConfigSample {
    pub source: GateTuple,
    pub target: GateTuple,
}

/// Maps every term of `source` from language `from` to `to`.
pub fn map_config(source: &GateTuple, mapping: &OntologyMapping, from: &str, to: &str) -> Result<GateConfigSample> {
    let target = GateTuple {
        acts: mapping.map_acts(&source.acts, from, to)?,
        slot: mapping.translate(&source.slot, from, to)?,
        value: source
            .value
            .as_deref()
            .map(|v| mapping.translate(v, from, to))
            .transpose()?,
    };
    Ok(GateConfigSample {
        source: source.clone(),
        target,
    })
}

/// Every act pattern seen in `dialogs` (plus the act-free pattern) crossed
/// with every candidate of `ontology`, mapped into `to`.
pub fn gate_samples(
    dialogs: &[Dialog],
    ontology: &Ontology,
    mapping: &OntologyMapping,
    from: &str,
    to: &str,
) -> Result<Vec<GateConfigSample>> {
    let mut patterns = IndexSet::new();
    patterns.insert(SystemActs::none());
    for turn in dialogs.iter().flat_map(|d| &d.turns) {
        patterns.insert(turn.system_acts.clone());
    }
    let mut candidates: Vec<(String, Option<String>)> = Vec::new();
    for (slot, values) in &ontology.informable {
        candidates.extend(values.iter().map(|v| (slot.clone(), Some(v.clone()))));
    }
    candidates.extend(ontology.requestable.iter().map(|r| (r.clone(), None)));
    let mut out = Vec::with_capacity(patterns.len() * candidates.len());
    for acts in &patterns {
        for (slot, value) in &candidates {
            let tuple = GateTuple {
                acts: acts.clone(),
                slot: slot.clone(),
                value: value.clone(),
            };
            out.push(map_config(&tuple, mapping, from, to)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct StudentInput {
    acts: ActVectors,
    cs: Vec<f64>,
    cv: Option<Vec<f64>>,
}

/// Samples with the teacher's gates computed once and the student's term
/// vectors looked up once.
#[derive(Debug, Clone)]
pub struct PreparedGates {
    teacher_gates: Vec<Vec<f64>>,
    student_inputs: Vec<StudentInput>,
}

impl PreparedGates {
    pub fn new(
        samples: &[GateConfigSample],
        teacher: &NbtModel,
        source: &Lexicon,
        target: &Lexicon,
    ) -> Result<Self> {
        let h = teacher.hidden();
        if source.dim() != h || target.dim() != h {
            return Err(Error::Shape(format!(
                "embedding widths {} and {} for H={h}",
                source.dim(),
                target.dim()
            )));
        }
        let mut teacher_gates = Vec::with_capacity(samples.len());
        let mut student_inputs = Vec::with_capacity(samples.len());
        for s in samples {
            let cs = source.embed_term(&s.source.slot)?;
            let cv = s.source.value.as_deref().map(|v| source.embed_term(v)).transpose()?;
            let acts = source.embed_acts(&s.source.acts)?;
            teacher_gates.push(context_gate(&teacher.params, h, &cs, cv.as_deref(), &acts)?);
            student_inputs.push(StudentInput {
                acts: target.embed_acts(&s.target.acts)?,
                cs: target.embed_term(&s.target.slot)?,
                cv: s.target.value.as_deref().map(|v| target.embed_term(v)).transpose()?,
            });
        }
        Ok(PreparedGates {
            teacher_gates,
            student_inputs,
        })
    }

    pub fn len(&self) -> usize {
        self.teacher_gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teacher_gates.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GateCost {
    pub cost: f64,
    /// Gradients for the student's trainable gate parameters.
    pub grads: Gradients,
}

/// `Σ ‖g_teacher − g_student‖²` over the prepared samples.
pub fn prepared_gate_cost(prepared: &PreparedGates, student: &NbtModel) -> Result<GateCost> {
    let h = student.hidden();
    let view = GateView::new(&student.params, h)?;
    let mut grads = Gradients::new();
    let mut cost = 0.0;
    for (g_e, input) in prepared.teacher_gates.iter().zip(&prepared.student_inputs) {
        if g_e.len() != h {
            return Err(Error::Shape(format!("teacher gate of width {} for H={h}", g_e.len())));
        }
        let cv = input.cv.as_deref();
        let proj = project_acts(&view, &input.acts)?;
        let g1 = relevance_gate(&view, &input.cs, cv);
        let terms = act_terms(&proj, &input.cs, cv);
        let extra = terms.total();
        let mut dg = vec![0.0; h];
        for i in 0..h {
            let diff = g1[i] + extra - g_e[i];
            cost += diff * diff;
            dg[i] = 2.0 * diff;
        }
        relevance_backward(h, &input.cs, cv, &g1, &dg, &mut grads);
        let mut act_grads = ActGradients::new(h);
        act_grads.add(&input.cs, cv, &terms, dg.iter().sum());
        act_grads.flush(&input.acts, &mut grads);
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("gate cost".into()));
    }
    grads.retain(|n| names::is_gate(n) && student.params.is_trainable(n));
    Ok(GateCost { cost, grads })
}

/// Gate matching cost of `samples` between a teacher over `source` terms and
/// a student over `target` terms.
pub fn gate_cost(
    samples: &[GateConfigSample],
    teacher: &NbtModel,
    source: &Lexicon,
    student: &NbtModel,
    target: &Lexicon,
) -> Result<GateCost> {
    prepared_gate_cost(&PreparedGates::new(samples, teacher, source, target)?, student)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, sigmoid, Tensor};
    use crate::fixtures;

    fn mapping() -> OntologyMapping {
        let mut m = OntologyMapping::new();
        for (c, en, de) in [
            ("FOOD", "food", "essen"),
            ("AREA", "area", "gegend"),
            ("THAI", "thai", "thailändisch"),
            ("GREEK", "greek", "griechisch"),
            ("NORTH", "north", "nord"),
            ("SOUTH", "south", "süd"),
            ("CENTRE", "centre", "zentrum"),
            ("PHONE", "phone", "telefon"),
            ("ADDRESS", "address", "adresse"),
        ] {
            m.add(c, "en", en).unwrap();
            m.add(c, "de", de).unwrap();
        }
        m
    }

    #[test]
    fn request_acts_map_componentwise() {
        let t = GateTuple {
            acts: SystemActs {
                request: Some("food".into()),
                confirm: None,
            },
            slot: "food".into(),
            value: Some("thai".into()),
        };
        let s = map_config(&t, &mapping(), "en", "de").unwrap();
        assert_eq!(s.target.acts.request.as_deref(), Some("essen"));
        assert_eq!(s.target.acts.confirm, None);
        assert_eq!(s.target.value.as_deref(), Some("thailändisch"));

        let none = GateTuple {
            acts: SystemActs::none(),
            slot: "phone".into(),
            value: None,
        };
        let s = map_config(&none, &mapping(), "en", "de").unwrap();
        assert!(s.target.acts.is_empty());
        assert_eq!(s.target.slot, "telefon");
    }

    #[test]
    fn unmapped_value_is_named() {
        let t = GateTuple {
            acts: SystemActs::none(),
            slot: "food".into(),
            value: Some("persian".into()),
        };
        let err = map_config(&t, &mapping(), "en", "de").unwrap_err();
        assert!(err.to_string().contains("persian"), "{err}");
    }

    #[test]
    fn samples_cover_patterns_times_candidates() {
        let o = fixtures::ontology();
        let dialogs = fixtures::dialogs(&o);
        let s = gate_samples(&dialogs, &o, &mapping(), "en", "de").unwrap();
        // patterns: none, request=area, confirm area=north, confirm food=greek
        assert_eq!(s.len(), 4 * (5 + 2));
    }

    /// Identity mapping over a single language, so teacher and student see the
    /// same vectors.
    fn identity_mapping(o: &Ontology) -> OntologyMapping {
        let mut m = OntologyMapping::new();
        for term in o.slots().chain(o.informable.values().flatten().map(String::as_str)) {
            m.add(term, "en", term).unwrap();
        }
        for r in &o.requestable {
            m.add(r, "en", r).unwrap();
        }
        m
    }

    #[test]
    fn copied_student_has_zero_cost() {
        let lex = fixtures::lexicon(6, 1);
        let o = lex.ontology().clone();
        let samples = gate_samples(&fixtures::dialogs(&o), &o, &identity_mapping(&o), "en", "en").unwrap();
        let teacher = fixtures::model(6, 1);
        let out = gate_cost(&samples, &teacher, &lex, &teacher.clone(), &lex).unwrap();
        assert_eq!(out.cost, 0.0);
        let other = fixtures::model(6, 2);
        assert!(gate_cost(&samples, &teacher, &lex, &other, &lex).unwrap().cost > 0.0);
    }

    #[test]
    fn hand_evaluated_two_dimensional_case() {
        let mut inf = indexmap::IndexMap::new();
        inf.insert("s".to_string(), vec!["v".to_string()]);
        let o = Ontology::new(inf, vec![]).unwrap();
        let src = crate::corpus::EmbeddingTable::from_entries(
            2,
            [("s".to_string(), vec![1.0, 0.0]), ("v".to_string(), vec![0.0, 1.0])],
        )
        .unwrap();
        let tgt = crate::corpus::EmbeddingTable::from_entries(
            2,
            [("ss".to_string(), vec![0.5, 0.5]), ("vv".to_string(), vec![1.0, -1.0])],
        )
        .unwrap();
        let src_lex = Lexicon::new(std::sync::Arc::new(src), o.clone()).unwrap();
        let mut tgt_o = indexmap::IndexMap::new();
        tgt_o.insert("ss".to_string(), vec!["vv".to_string()]);
        let tgt_lex = Lexicon::new(std::sync::Arc::new(tgt), Ontology::new(tgt_o, vec![]).unwrap()).unwrap();

        let set = |m: &mut NbtModel, name: &str, data: Vec<f64>| {
            let shape = m.params.tensor(name).unwrap().shape().to_vec();
            m.params.replace(name, Tensor::new(shape, data).unwrap()).unwrap();
        };
        let mut teacher = fixtures::model(2, 0);
        set(&mut teacher, names::GATE_W_CS, vec![1.0, 0.0, 0.0, 1.0]);
        set(&mut teacher, names::GATE_B_CS, vec![0.0, 0.0]);
        set(&mut teacher, names::GATE_W_TS, vec![1.0, 0.0, 0.0, 1.0]);
        set(&mut teacher, names::GATE_W_TV, vec![2.0, 0.0, 0.0, 2.0]);
        let mut student = teacher.clone();
        set(&mut student, names::GATE_W_CS, vec![0.0, 1.0, 1.0, 0.0]);
        set(&mut student, names::GATE_B_CS, vec![0.5, -0.5]);

        let sample = GateConfigSample {
            source: GateTuple {
                acts: SystemActs {
                    request: None,
                    confirm: Some(("s".into(), "v".into())),
                },
                slot: "s".into(),
                value: Some("v".into()),
            },
            target: GateTuple {
                acts: SystemActs {
                    request: None,
                    confirm: Some(("ss".into(), "vv".into())),
                },
                slot: "ss".into(),
                value: Some("vv".into()),
            },
        };
        // teacher: c_s+c_v = (1,1); g1 = σ(1)·(1,1); g3 = (c_s·t_s)(c_v·2t_v) = 1·2 = 2
        let g_e = [sigmoid(1.0) + 2.0, sigmoid(1.0) + 2.0];
        // student: c_s+c_v = (1.5,-0.5); W_cs swaps -> (-0.5,1.5); + b -> (0,1)
        // g3 = (c_s·c_s)(c_v·2c_v) = 0.5 · 4 = 2
        let g_f = [sigmoid(0.0) + 2.0, sigmoid(1.0) + 2.0];
        let expected: f64 = g_e.iter().zip(&g_f).map(|(a, b)| (a - b) * (a - b)).sum();
        let got = gate_cost(&[sample], &teacher, &src_lex, &student, &tgt_lex).unwrap();
        assert!((got.cost - expected).abs() < 1e-14, "{} vs {expected}", got.cost);
    }

    #[test]
    fn gradients_match_and_stay_in_the_gate() {
        let src = fixtures::lexicon(8, 5);
        let tgt = fixtures::lexicon(8, 6);
        let o = src.ontology().clone();
        let samples = gate_samples(&fixtures::dialogs(&o), &o, &identity_mapping(&o), "en", "en").unwrap();
        for seed in 0..5 {
            let teacher = fixtures::model(8, 100 + seed);
            let mut student = fixtures::model(8, 200 + seed);
            student.freeze_decoder();
            let prepared = PreparedGates::new(&samples, &teacher, &src, &tgt).unwrap();
            let report = grad_check(
                |p| {
                    let mut m = student.clone();
                    m.params = p.clone();
                    let out = prepared_gate_cost(&prepared, &m)?;
                    Ok((out.cost, out.grads))
                },
                &student.params,
                1e-5,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
            let out = prepared_gate_cost(&prepared, &student).unwrap();
            assert!(out.grads.names().all(names::is_gate));
        }
    }
}
