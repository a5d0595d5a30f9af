//! Acceptance criteria, one line of output per criterion.
//!
//! Run with `cargo test -p proofloop-core --test acceptance`. Criterion 8
//! needs a Coq toplevel named by `PROOFLOOP_COQTOP` and is skipped otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use proofloop::backtrack::BacktrackEvent;
use proofloop::demo;
use proofloop::errors::{category_histogram, classify, ErrorCategory};
use proofloop::genai::ModelClient;
use proofloop::orchestrator::{
    format_cell, prove, replay, ProofResult, ProveConfig, SentenceOutcome,
};
use proofloop::prover::mock::MockSession;
use proofloop::prover::{Backend, CoqtopBackend, CoqtopConfig, Session};
use proofloop::repair::{repair, Mechanism, RepairContext, RepairStatus};
use proofloop::retrieval::{
    bm25_rerank, build_index, knn_premises, PremiseDoc, PremiseKind, RankedPremise,
};
use proofloop::script::{as_tactic, normalize, split_sentences, ProofScript, Sentence};

enum Verdict {
    Pass(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("sentence splitter", splitter),
        ("error classifier", classifier),
        ("retrieval oracle equivalence", retrieval),
        ("repair mechanisms", repairs),
        ("backtracking walkthrough", backtracking),
        ("end-to-end proving", end_to_end),
        ("report formatting", report),
        ("live coqtop tier", live_coqtop),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Verdict::Pass(note)) => {
                println!("criterion {} {name}: PASS ({secs:.2}s) {note}", i + 1)
            }
            Ok(Verdict::Skip(why)) => println!("criterion {} {name}: SKIP {why}", i + 1),
            Err(payload) => {
                failed += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {} {name}: FAIL ({secs:.2}s) {msg}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn texts(src: &str) -> Vec<String> {
    split_sentences(src)
        .unwrap()
        .iter()
        .map(Sentence::normalized)
        .collect()
}

const ADD_COMM_BODY: &str = "Proof.
  intros n m.
  induction n.
  -
  auto.
  -
  simpl.
  rewrite IHn.
  apply plus_n_Sm.
Qed.";

const SQR_LE_BODY: &str = "Proof.
  intros. destruct a.
  - reflexivity.
  - induction p.
    + simpl. ring.
    + apply Z_le_dec.
    + apply Z.le_refl.
  - apply Z.eq_le_incl.
Qed.";

const POOL: &[&str] = &[
    "intros n m.",
    "induction n.",
    "-",
    "+",
    "*",
    "auto.",
    "simpl.",
    "rewrite IHn.",
    "apply plus_n_Sm.",
    "apply Z.le_refl.",
    "idtac \"a. b\".",
    "idtac \"say \"\"hi\"\". ok\".",
    "exact (fun x => x).",
    "destruct a as [|p|p].",
    "{",
    "}",
];

const FILLERS: &[&str] = &[
    " ",
    "\n",
    "\n    ",
    " (* note. *) ",
    "\n(* nested (* inner. *) outer. *)\n",
    " (* \"a string *) inside\" a comment. *) ",
    "(**)",
];

fn splitter() -> Verdict {
    let start = Instant::now();
    let add_comm_texts = texts(ADD_COMM_BODY);
    assert_eq!(
        add_comm_texts,
        [
            "Proof.",
            "intros n m.",
            "induction n.",
            "-",
            "auto.",
            "-",
            "simpl.",
            "rewrite IHn.",
            "apply plus_n_Sm.",
            "Qed."
        ]
    );
    let sqr_le_texts = texts(SQR_LE_BODY);
    assert_eq!(
        sqr_le_texts,
        [
            "Proof.",
            "intros.",
            "destruct a.",
            "-",
            "reflexivity.",
            "-",
            "induction p.",
            "+",
            "simpl.",
            "ring.",
            "+",
            "apply Z_le_dec.",
            "+",
            "apply Z.le_refl.",
            "-",
            "apply Z.eq_le_incl.",
            "Qed."
        ]
    );
    let distinct: BTreeSet<&String> = sqr_le_texts.iter().collect();

    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        proptest::collection::vec(0..POOL.len(), 1..16),
        proptest::collection::vec(0..FILLERS.len(), 17),
        proptest::collection::vec(any::<bool>(), 16),
    );
    runner
        .run(&strategy, |(picks, fillers, inner)| {
            let expected: Vec<String> = picks.iter().map(|&i| normalize(POOL[i])).collect();
            let mut injected = String::from(FILLERS[fillers[0]]);
            for (n, &i) in picks.iter().enumerate() {
                let sentence = POOL[i];
                // Also inject inside a sentence, at its first space outside any string.
                match sentence
                    .find(' ')
                    .filter(|&p| inner[n] && !sentence[..p].contains('"'))
                {
                    Some(p) => {
                        injected.push_str(&sentence[..p]);
                        injected.push_str(" (* mid. *) ");
                        injected.push_str(&sentence[p + 1..]);
                    }
                    None => injected.push_str(sentence),
                }
                // A period only ends a sentence when followed by a blank.
                injected.push(' ');
                injected.push_str(FILLERS[fillers[n + 1]]);
                injected.push(' ');
            }
            let split = split_sentences(&injected)
                .map_err(|e| TestCaseError::fail(format!("{e}: {injected}")))?;
            let got: Vec<String> = split.iter().map(Sentence::normalized).collect();
            prop_assert_eq!(&got, &expected, "injected: {}", injected);
            let rendered = ProofScript::from_sentences(split).render();
            let again: Vec<String> = texts(&rendered);
            prop_assert_eq!(again, expected);
            Ok(())
        })
        .unwrap_or_else(|e| panic!("{e}"));
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Verdict::Pass(format!(
        "add_comm body: {} sentences; sqr_le body: {} sentences ({} distinct); 200 injection cases",
        add_comm_texts.len(),
        sqr_le_texts.len(),
        distinct.len()
    ))
}

fn tactic(text: &str) -> proofloop::script::Tactic {
    as_tactic(&Sentence::parse_one(text).unwrap())
}

fn classifier() -> Verdict {
    use ErrorCategory::*;
    let quoted = [
        (
            "apply H.",
            "Unable to unify `m=n' with `n=m'",
            WrongTheoremApplication,
        ),
        (
            "apply H.",
            "Unable to unify \"m=n\" with \"n=m\".",
            WrongTheoremApplication,
        ),
        (
            "rewrite H2.",
            "Found no subterm matching `b' in the current goal",
            IncorrectRewrite,
        ),
        (
            "rewrite H2.",
            "Found no subterm matching \"b\" in the current goal.",
            IncorrectRewrite,
        ),
        ("destruct f.", "Not an inductive product", TacticMisuse),
        ("induction f.", "Not an inductive product.", TacticMisuse),
        (
            "unfold nat.",
            "Cannot turn inductive into an evaluable reference",
            TacticMisuse,
        ),
        (
            "unfold nat.",
            "Cannot turn inductive into an evaluable reference.",
            TacticMisuse,
        ),
        ("+", "Wrong bullet +: Expecting -", BulletMisuse),
        (
            "-",
            "Wrong bullet -: Current bullet - is not finished",
            BulletMisuse,
        ),
        (
            "apply in_remove_all.",
            "The reference in_remove_all was not found in the current environment.",
            InvalidReference,
        ),
        ("intros H.", "H is already used.", RedundantIntroduction),
        ("Abort.", "Proof aborted.", Miscellaneous),
    ];
    for (tac, msg, want) in quoted {
        let facts = classify(msg, &tactic(tac));
        assert_eq!(facts.category, want, "{msg}");
    }
    assert_eq!(
        classify("Unable to unify \"m=n\" with \"n=m\".", &tactic("apply H."))
            .misused_theorem
            .as_deref(),
        Some("H")
    );
    assert_eq!(
        classify(
            "Found no subterm matching \"b\" in the current goal.",
            &tactic("rewrite H2.")
        )
        .misused_theorem
        .as_deref(),
        Some("H2")
    );
    assert_eq!(
        classify(
            "The reference in_remove_all was not found in the current environment.",
            &tactic("apply in_remove_all.")
        )
        .bad_reference
        .as_deref(),
        Some("in_remove_all")
    );
    assert_eq!(
        classify("Wrong bullet +: Expecting -.", &tactic("+"))
            .expected_bullet
            .as_deref(),
        Some("-")
    );
    assert!(
        classify(
            "Wrong bullet -: Current bullet - is not finished.",
            &tactic("-")
        )
        .unfinished_bullet
    );

    let fixture = include_str!("../fixtures/error_sample.jsonl");
    let mut facts = Vec::new();
    for line in fixture.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let f = classify(
            row["error"].as_str().unwrap(),
            &tactic(row["tactic"].as_str().unwrap()),
        );
        assert_eq!(
            format!("{:?}", f.category),
            row["category"].as_str().unwrap(),
            "{line}"
        );
        facts.push(f);
    }
    let hist = category_histogram(&facts);
    let want: BTreeMap<ErrorCategory, usize> = [
        (WrongTheoremApplication, 258),
        (InvalidReference, 79),
        (IncorrectRewrite, 61),
        (RedundantIntroduction, 56),
        (TacticMisuse, 44),
        (BulletMisuse, 19),
        (Miscellaneous, 3),
        (Unknown, 0),
    ]
    .into_iter()
    .collect();
    assert_eq!(hist, want);
    Verdict::Pass(format!(
        "{} quoted messages; {} fixture events match 258/79/61/56/44/19/3",
        quoted.len(),
        facts.len()
    ))
}

const VOCAB: &[&str] = &[
    "nat", "list", "plus", "mult", "le", "lt", "app", "rev", "map", "succ", "zero", "eq", "forall",
    "exists", "length", "in", "nil", "cons", "fold", "filter",
];

/// TF-IDF cosine scores by dense brute force, straight from the definitions.
fn oracle_knn(docs: &[(String, Vec<String>)], query: &[String]) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let df = |t: &str| {
        docs.iter()
            .filter(|(_, toks)| toks.iter().any(|x| x == t))
            .count() as f64
    };
    let idf = |t: &str| ((n + 1.0) / (df(t) + 1.0)).ln() + 1.0;
    let mut axes: Vec<String> = docs
        .iter()
        .flat_map(|(_, t)| t.clone())
        .chain(query.iter().cloned())
        .collect();
    axes.sort();
    axes.dedup();
    let vector = |toks: &[String]| {
        let v: Vec<f64> = axes
            .iter()
            .map(|a| toks.iter().filter(|t| *t == a).count() as f64 * idf(a))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter()
            .map(|x| if norm > 0.0 { x / norm } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let q = vector(query);
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .map(|(name, toks)| {
            (
                name.clone(),
                vector(toks).iter().zip(&q).map(|(a, b)| a * b).sum(),
            )
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

/// Okapi BM25 (k1 1.5, b 0.75, idf ln(1 + (N - df + 0.5)/(df + 0.5))) over
/// the candidate set, distinct query terms.
fn oracle_bm25(cands: &[(String, Vec<String>, f64)], query: &[String]) -> Vec<(String, f64, f64)> {
    let n = cands.len() as f64;
    let avgdl = cands.iter().map(|c| c.1.len()).sum::<usize>() as f64 / n;
    let mut terms: Vec<&String> = query.iter().collect();
    terms.sort();
    terms.dedup();
    let mut out: Vec<(String, f64, f64)> = cands
        .iter()
        .map(|(name, toks, knn)| {
            let mut s = 0.0;
            for t in &terms {
                let tf = toks.iter().filter(|x| x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = cands.iter().filter(|c| c.1.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = toks.len() as f64;
                s += idf * tf * 2.5 / (tf + 1.5 * (0.25 + 0.75 * dl / avgdl));
            }
            (name.clone(), s, *knn)
        })
        .collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| b.2.partial_cmp(&a.2).unwrap())
            .then_with(|| a.0.cmp(&b.0))
    });
    out
}

const EPS: f64 = 1e-9;

/// Same order up to ties within `EPS`, and every score within `EPS`.
fn assert_same_ranking(got: &[(String, f64)], want: &[(String, f64)], all: &BTreeMap<String, f64>) {
    assert_eq!(got.len(), want.len());
    for ((gn, gs), (wn, ws)) in got.iter().zip(want) {
        assert!(
            (gs - all[gn]).abs() <= EPS,
            "{gn}: {gs} vs oracle {}",
            all[gn]
        );
        assert!(
            gn == wn || (gs - ws).abs() <= EPS,
            "order differs at {gn} / {wn}"
        );
    }
}

fn retrieval() -> Verdict {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut queries = 0;
    let mut worst: f64 = 0.0;
    for _corpus in 0..40 {
        let n_docs = rng.gen_range(1..=50);
        let docs: Vec<(String, Vec<String>)> = (0..n_docs)
            .map(|i| {
                let len = rng.gen_range(1..12);
                let toks = (0..len)
                    .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string())
                    .collect();
                (format!("doc{i:02}"), toks)
            })
            .collect();
        let corpus = build_index(
            docs.iter()
                .map(|(n, t)| PremiseDoc::new(n.clone(), PremiseKind::Theorem, t.join(" ")))
                .collect(),
        )
        .unwrap();
        for _ in 0..25 {
            let qlen = rng.gen_range(1..8);
            let query: Vec<String> = (0..qlen)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        "unseen".to_string()
                    } else {
                        VOCAB[rng.gen_range(0..VOCAB.len())].to_string()
                    }
                })
                .collect();
            let text = query.join(" ");
            let k = rng.gen_range(1..=n_docs + 2);

            let oracle = oracle_knn(&docs, &query);
            let all: BTreeMap<String, f64> = oracle.iter().cloned().collect();
            let got: Vec<RankedPremise> = knn_premises(&corpus, &text, k);
            let got_pairs: Vec<(String, f64)> = got
                .iter()
                .map(|r| (r.doc.name.clone(), r.knn_score))
                .collect();
            let want: Vec<(String, f64)> = oracle.into_iter().take(k).collect();
            assert_same_ranking(&got_pairs, &want, &all);
            for (g, w) in got_pairs.iter().zip(&want) {
                worst = worst.max((g.1 - all[&g.0]).abs()).max((g.1 - w.1).abs());
            }

            let cands: Vec<(String, Vec<String>, f64)> = got
                .iter()
                .map(|r| {
                    let toks = docs.iter().find(|d| d.0 == r.doc.name).unwrap().1.clone();
                    (r.doc.name.clone(), toks, r.knn_score)
                })
                .collect();
            let oracle = oracle_bm25(&cands, &query);
            let all: BTreeMap<String, f64> =
                oracle.iter().map(|(n, s, _)| (n.clone(), *s)).collect();
            let reranked = bm25_rerank(got, &text);
            let got_pairs: Vec<(String, f64)> = reranked
                .iter()
                .map(|r| (r.doc.name.clone(), r.bm25_score))
                .collect();
            let want: Vec<(String, f64)> = oracle.iter().map(|(n, s, _)| (n.clone(), *s)).collect();
            assert_same_ranking(&got_pairs, &want, &all);
            queries += 1;
        }
    }
    let elapsed = start.elapsed();
    assert_eq!(queries, 1000);
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Verdict::Pass(format!("{queries} queries, max |delta| {worst:.1e}"))
}

fn mock_session(name: &str, script: &[&str]) -> MockSession {
    let t = demo::theorem(name).unwrap();
    let mut s = demo::backend().start(&t.statement).unwrap();
    for text in script {
        assert!(
            s.execute(&Sentence::parse_one(text).unwrap()).is_ok(),
            "{text}"
        );
    }
    s
}

/// Run the repair for the error the session reports on `failing`, checking
/// that an unrepaired outcome leaves the session where it was.
fn repair_in(session: &mut MockSession, failing: &str, premises: &[&str]) -> RepairStatus {
    let sentence = Sentence::parse_one(failing).unwrap();
    let error = match session.execute(&sentence) {
        proofloop::prover::StepResult::Failed(e) => e,
        other => panic!("{failing} should fail, got {other:?}"),
    };
    let facts = classify(&error, &as_tactic(&sentence));
    let ctx = RepairContext {
        premises: premises.iter().map(|s| s.to_string()).collect(),
        ..RepairContext::default()
    };
    let before = (session.state_id().to_string(), session.history_depth());
    let out = repair(&facts, &sentence, session, &ctx);
    if out.status == RepairStatus::NotRepaired {
        assert_eq!(
            (session.state_id().to_string(), session.history_depth()),
            before,
            "atomicity for {failing}"
        );
    }
    out.status
}

fn repaired(texts: &[&str]) -> RepairStatus {
    RepairStatus::Repaired(
        texts
            .iter()
            .map(|t| Sentence::parse_one(t).unwrap())
            .collect(),
    )
}

fn same_texts(a: &RepairStatus, b: &RepairStatus) -> bool {
    match (a, b) {
        (RepairStatus::Repaired(x), RepairStatus::Repaired(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.same_text(q))
        }
        _ => a == b,
    }
}

fn repairs() -> Verdict {
    let premises = [
        "in_remove_all_perm",
        "in_remove_all_preserve",
        "remove_all_cons",
    ];
    let mut s = mock_session("in_remove_all_keep", &["intros."]);
    let got = repair_in(&mut s, "apply in_remove_all.", &premises);
    assert!(
        same_texts(&got, &repaired(&["apply in_remove_all_preserve."])),
        "{got:?}"
    );
    assert_eq!(s.state_id(), "done");

    let mut s = mock_session("intro_clash", &["intros P Q R H."]);
    let got = repair_in(&mut s, "intros H.", &[]);
    assert!(same_texts(&got, &repaired(&["intros H'."])), "{got:?}");

    let mut s = mock_session("add_comm", &["intros n m.", "induction n.", "-", "auto."]);
    let got = repair_in(&mut s, "+", &[]);
    assert!(same_texts(&got, &repaired(&["-"])), "{got:?}");
    assert_eq!(s.state_id(), "step");

    let mut s = mock_session("succ_le", &["intros."]);
    let got = repair_in(&mut s, "apply Zlt_le_succ.", &[]);
    assert!(
        same_texts(&got, &repaired(&["qsimpl use: Zlt_le_succ."])),
        "{got:?}"
    );

    // Unrepaired paths, each checked for atomicity inside `repair_in`.
    let mut unrepaired = 0;
    let mut check = |name: &str, setup: &[&str], failing: &str, premises: &[&str]| {
        let mut s = mock_session(name, setup);
        assert_eq!(
            repair_in(&mut s, failing, premises),
            RepairStatus::NotRepaired,
            "{failing}"
        );
        unrepaired += 1;
    };
    check(
        "in_remove_all_keep",
        &["intros."],
        "apply in_remove_all.",
        &["in_remove_all_perm"],
    );
    check(
        "in_remove_all_keep",
        &["intros."],
        "apply in_remove_all.",
        &[],
    );
    check(
        "in_remove_all_keep",
        &["intros."],
        "apply H1.",
        &["in_remove_all_perm"],
    );
    check(
        "intro_clash",
        &["intros P Q R H.", "intros H'.", "intros H''."],
        "intros H.",
        &[],
    );
    check("succ_le", &["intros."], "apply Z.le_refl.", &[]);
    check(
        "sqr_le",
        &[
            "intros.",
            "destruct a.",
            "-",
            "reflexivity.",
            "-",
            "induction p.",
            "+",
            "simpl.",
        ],
        "ring.",
        &[],
    );
    check(
        "sqr_le",
        &[
            "intros.",
            "destruct a.",
            "-",
            "reflexivity.",
            "-",
            "chfcrush use: Zlt_le_succ, Pos2Z.is_pos, Z.le_mul_diag_r.",
            "-",
            "apply Z.eq_le_incl.",
        ],
        "Qed.",
        &[],
    );

    // A bullet that the prover asks for but then rejects.
    let mut s = mock_session("add_comm", &["intros n m.", "induction n.", "-"]);
    let before = s.state_id().to_string();
    let facts = classify("Wrong bullet *: Expecting +.", &tactic("*"));
    let out = repair(
        &facts,
        &Sentence::parse_one("*").unwrap(),
        &mut s,
        &RepairContext::default(),
    );
    assert_eq!(out.status, RepairStatus::NotRepaired);
    assert_eq!(s.state_id(), before);

    // Abort is recognised but never repaired.
    let facts = classify("Proof aborted.", &tactic("Abort."));
    let out = repair(
        &facts,
        &Sentence::parse_one("Abort.").unwrap(),
        &mut s,
        &RepairContext::default(),
    );
    assert_eq!(
        (out.status, out.mechanism),
        (RepairStatus::NotRepaired, None)
    );

    // Disabled mechanisms never run.
    let mut s = mock_session("succ_le", &["intros."]);
    let facts = classify(
        "Unable to unify \"a\" with \"b\".",
        &tactic("apply Zlt_le_succ."),
    );
    let ctx = RepairContext {
        disabled: vec![Mechanism::PremiseAugmentation],
        ..RepairContext::default()
    };
    let out = repair(
        &facts,
        &Sentence::parse_one("apply Zlt_le_succ.").unwrap(),
        &mut s,
        &ctx,
    );
    assert_eq!((out.status, out.attempts), (RepairStatus::NotRepaired, 0));
    Verdict::Pass(format!(
        "4 worked examples repaired; {} unrepaired paths atomic",
        unrepaired + 2
    ))
}

fn repaired_sqr_le_script() -> Vec<&'static str> {
    vec![
        "Proof.",
        "intros.",
        "destruct a.",
        "-",
        "reflexivity.",
        "-",
        "chfcrush use: Zlt_le_succ, Pos2Z.is_pos, Z.le_mul_diag_r.",
        "-",
        "hfcrush.",
        "Qed.",
    ]
}

fn prove_demo(name: &str) -> (ProofResult, usize) {
    let model = demo::model();
    let r = prove(
        &demo::theorem(name).unwrap(),
        &demo::corpus(),
        &demo::backend(),
        &model,
        &ProveConfig::default(),
    );
    (r, model.calls())
}

fn backtracking() -> Verdict {
    let (r, _) = prove_demo("sqr_le");
    let ring = r
        .events
        .iter()
        .find(|e| e.sentence == "ring.")
        .expect("ring. was attempted");
    assert_eq!(ring.category, Some(ErrorCategory::Unknown));
    let expected = vec![
        BacktrackEvent::HammerFailed {
            state: "pos_xI_simpl".into(),
        },
        BacktrackEvent::Undo {
            sentence: "simpl.".into(),
        },
        BacktrackEvent::HammerFailed {
            state: "pos_xI".into(),
        },
        BacktrackEvent::BulletHit { bullet: "+".into() },
        BacktrackEvent::Discard {
            root: "induction p.".into(),
            removed: vec!["induction p.".into(), "+".into()],
        },
        BacktrackEvent::HammerSucceeded {
            state: "pos".into(),
            proof: vec!["chfcrush use: Zlt_le_succ, Pos2Z.is_pos, Z.le_mul_diag_r.".into()],
        },
    ];
    assert_eq!(ring.backtrack, expected);
    let skipped: Vec<&str> = r
        .events
        .iter()
        .filter(|e| e.outcome == SentenceOutcome::Skipped)
        .map(|e| e.sentence.as_str())
        .collect();
    assert_eq!(skipped, ["+", "apply Z_le_dec.", "+", "apply Z.le_refl."]);
    let qed = r
        .events
        .iter()
        .find(|e| e.sentence == "Qed." && !e.backtrack.is_empty())
        .unwrap();
    assert_eq!(
        qed.backtrack,
        vec![
            BacktrackEvent::HammerFailed {
                state: "neg_eq".into()
            },
            BacktrackEvent::Undo {
                sentence: "apply Z.eq_le_incl.".into()
            },
            BacktrackEvent::HammerSucceeded {
                state: "neg".into(),
                proof: vec!["hfcrush.".into()]
            },
        ]
    );
    let script = r.final_script.expect("proved");
    assert_eq!(script.texts(), repaired_sqr_le_script());
    Verdict::Pass("6-event walkthrough reproduced; final script matches".into())
}

fn end_to_end() -> Verdict {
    let backend = demo::backend();
    let (add, calls) = prove_demo("add_comm");
    assert!(add.is_proved(), "{:?}", add.failure);
    assert_eq!(calls, 1);
    assert_eq!(add.model_calls, 1);
    assert!(add
        .events
        .iter()
        .all(|e| e.outcome == SentenceOutcome::Accepted));
    assert_eq!(
        add.final_script.as_ref().unwrap().texts(),
        texts(ADD_COMM_BODY)
    );
    replay(
        &backend,
        &demo::theorem("add_comm").unwrap().statement,
        add.final_script.as_ref().unwrap(),
    )
    .unwrap();

    let (sqr, calls) = prove_demo("sqr_le");
    assert!(sqr.is_proved(), "{:?}", sqr.failure);
    assert_eq!(calls, 1);
    assert!(sqr
        .events
        .iter()
        .any(|e| e.outcome == SentenceOutcome::Backtracked));
    replay(
        &backend,
        &demo::theorem("sqr_le").unwrap().statement,
        sqr.final_script.as_ref().unwrap(),
    )
    .unwrap();

    let (again, _) = prove_demo("sqr_le");
    assert_eq!(again.events, sqr.events);

    let (bad, calls) = prove_demo("hopeless");
    assert!(!bad.is_proved());
    assert!(bad.final_script.is_none());
    assert_eq!(calls, 1);
    let _: &dyn ModelClient = &demo::model();
    let _: &dyn Backend = &backend;
    Verdict::Pass("add_comm and sqr_le proved and replayed; one model call each".into())
}

fn report() -> Verdict {
    assert_eq!(format_cell(4377, 10842), "4377 (40.4%)");
    Verdict::Pass("4377 of 10842 renders as 4377 (40.4%)".into())
}

fn goal_texts(session: &dyn Session) -> Vec<String> {
    session
        .state()
        .goals
        .iter()
        .map(|g| g.conclusion.clone())
        .collect()
}

fn live_coqtop() -> Verdict {
    let config = match CoqtopConfig::from_env() {
        Some(c) => c,
        None => {
            return Verdict::Skip(format!(
                "({} not set)",
                proofloop::prover::coqtop::COQTOP_ENV
            ))
        }
    };
    let backend = CoqtopBackend::new(config);
    let statement = "Theorem add_comm : forall n m : nat, n + m = m + n.";
    let mut session = backend.start_session(statement).expect("coqtop starts");
    let sentences = split_sentences(ADD_COMM_BODY).unwrap();
    let mut seen = vec![goal_texts(session.as_ref())];
    for s in &sentences[..sentences.len() - 1] {
        assert!(session.execute(s).is_ok(), "{}", s.raw);
        seen.push(goal_texts(session.as_ref()));
    }
    assert!(session.is_complete());
    for expected in seen.iter().rev().skip(1) {
        session.undo().expect("undo");
        assert_eq!(&goal_texts(session.as_ref()), expected);
    }
    for s in &sentences {
        assert!(session.execute(s).is_ok(), "{}", s.raw);
    }
    Verdict::Pass("add_comm replayed with undo at every step".into())
}
