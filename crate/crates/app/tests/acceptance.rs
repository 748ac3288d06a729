//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p lore --test acceptance`.

mod common;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lore_core::metrics::{exact_match, f1, rouge_l};
use lore_core::{
    fuse, select, tokenize, Bm25Params, Corpus, LorWeights, Passage, RankedList, ScoredAnswer, SparseIndex,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde::Deserialize;

use common::*;
use oracles::{brute_force_bm25, rouge_oracle, SQUAD_REFERENCE};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn rrf_worked_example() -> Check {
    let a = RankedList::from_ordered("bm25", ["D1", "D2", "D3", "D4"].map(|d| (d, 0.0)));
    let b = RankedList::from_ordered("dense", ["D3", "D1", "D5", "D2"].map(|d| (d, 0.0)));
    let lists = [a, b];
    let fused = fuse(&lists, 60).map_err(|e| e.to_string())?;

    let expected = [
        ("D1", 0.0325225),
        ("D3", 0.0322663),
        ("D2", 0.0317540),
        ("D5", 0.0158730),
        ("D4", 0.0156250),
    ];
    if fused.len() != expected.len() {
        return Err(format!("{} fused entries", fused.len()));
    }
    let mut worst = 0.0f64;
    for (f, (id, score)) in fused.iter().zip(expected) {
        if f.passage_id != id {
            return Err(format!("rank {}: got {} want {id}", f.context_rank, f.passage_id));
        }
        worst = worst.max((f.rrf_score - score).abs());
    }
    if worst >= 1e-6 {
        return Err(format!("max score error {worst:e}"));
    }
    // the order printed alongside the rounded scores is not the exact one
    let printed = ["D1", "D2", "D3", "D4", "D5"];
    let order: Vec<&str> = fused.iter().map(|f| f.passage_id.as_str()).collect();
    if order == printed {
        return Err("exact order unexpectedly equals the rounded listing".into());
    }

    let start = Instant::now();
    let runs = 1000;
    for _ in 0..runs {
        std::hint::black_box(fuse(std::hint::black_box(&lists), 60).unwrap());
    }
    let per_call = start.elapsed() / runs;
    if per_call >= Duration::from_millis(1) {
        return Err(format!("fuse took {per_call:?}"));
    }
    Ok(format!(
        "order {order:?}, max error {worst:.1e}, {per_call:?}/call; rounded listing {printed:?} differs"
    ))
}

#[derive(Deserialize)]
struct TableRow {
    question: String,
    answers: Vec<String>,
    probabilities: Vec<f64>,
    selected: String,
    selected_rank: usize,
}

fn qualitative_tables() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/qualitative_tables.json");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let rows: Vec<TableRow> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if rows.len() != 6 {
        return Err(format!("{} rows", rows.len()));
    }
    let mut picked = Vec::new();
    for row in &rows {
        let cands: Vec<ScoredAnswer> = row
            .answers
            .iter()
            .zip(&row.probabilities)
            .enumerate()
            .map(|(i, (t, &p))| ScoredAnswer::new(t.clone(), format!("c{}", i + 1), p, i + 1, LorWeights::default()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let best = select(&cands).map_err(|e| e.to_string())?;
        if best.text != row.selected || best.context_rank != row.selected_rank {
            return Err(format!(
                "{:?}: selected {:?} at rank {}",
                row.question, best.text, best.context_rank
            ));
        }
        picked.push(format!("{}@{}", best.text, best.context_rank));
    }
    Ok(picked.join(", "))
}

const VOCAB: &[&str] = &["apple", "banana", "cherry", "date", "elder", "fig", "grape"];

fn bm25_oracle() -> Check {
    let docs = prop::collection::vec(prop::collection::vec(prop::sample::select(VOCAB), 1..8), 1..=6);
    let query = prop::collection::vec(prop::sample::select([VOCAB, &["kiwi"]].concat()), 1..=4);
    let cases = Cell::new(0u32);
    let worst = Cell::new(0.0f64);
    runner(500)
        .run(&(docs, query, 0.1f64..3.0, 0.0f64..=1.0), |(docs, query, k1, b)| {
            cases.set(cases.get() + 1);
            let corpus = Corpus::from_passages(
                docs.iter()
                    .enumerate()
                    .map(|(i, w)| Passage::new(format!("d{i}"), "", w.join(" ")).unwrap()),
            )
            .unwrap();
            let index = SparseIndex::build(&corpus, Bm25Params { k1, b }).unwrap();
            let tokens: Vec<Vec<String>> = corpus.passages().iter().map(|p| tokenize(&p.text)).collect();
            let query: Vec<String> = query.iter().map(|s| s.to_string()).collect();
            for (i, p) in corpus.passages().iter().enumerate() {
                let got = index.score(&query, &p.id).unwrap();
                let want = brute_force_bm25(&tokens, &query, i, k1, b);
                let err = (got - want).abs();
                worst.set(worst.get().max(err));
                prop_assert!(err < 1e-9, "doc {i}: {got} vs {want}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} cases, max error {:.1e}", cases.get(), worst.get()))
}

fn ranked_list() -> impl Strategy<Value = RankedList> {
    let ids: Vec<String> = (0..12).map(|i| format!("p{i:02}")).collect();
    prop::sample::subsequence(ids, 0..=12)
        .prop_shuffle()
        .prop_map(|order| RankedList::from_ordered("r", order.into_iter().map(|id| (id, 0.0))))
}

fn fusion_properties() -> Check {
    let lists = || prop::collection::vec(ranked_list(), 1..=4);
    let mut counts = [0u32; 3];

    let n = Cell::new(0);
    runner(1000)
        .run(&(lists(), any::<u64>()), |(lists, seed)| {
            n.set(n.get() + 1);
            let mut shuffled = lists.clone();
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(fuse(&lists, 60).unwrap(), fuse(&shuffled, 60).unwrap());
            Ok(())
        })
        .map_err(|e| format!("permutation invariance: {e}"))?;
    counts[0] = n.replace(0);

    runner(1000)
        .run(
            &(lists(), any::<prop::sample::Index>(), 1usize..100)
                .prop_filter("needs a non-first entry", |(ls, _, _)| ls.iter().any(|l| l.len() > 1)),
            |(lists, pick, k)| {
                n.set(n.get() + 1);
                let slots: Vec<(usize, usize)> = lists
                    .iter()
                    .enumerate()
                    .flat_map(|(li, l)| (1..l.len()).map(move |pos| (li, pos)))
                    .collect();
                let (li, pos) = slots[pick.index(slots.len())];
                let target = lists[li].entries[pos].passage_id.clone();
                let mut ids: Vec<String> = lists[li].passage_ids().map(str::to_owned).collect();
                ids.swap(pos, pos - 1);
                let mut improved = lists.clone();
                improved[li] = RankedList::from_ordered("r", ids.into_iter().map(|id| (id, 0.0)));
                let score = |ls: &[RankedList]| {
                    fuse(ls, k)
                        .unwrap()
                        .into_iter()
                        .find(|f| f.passage_id == target)
                        .unwrap()
                        .rrf_score
                };
                prop_assert!(score(&improved) > score(&lists));
                Ok(())
            },
        )
        .map_err(|e| format!("rank-improvement monotonicity: {e}"))?;
    counts[1] = n.replace(0);

    runner(1000)
        .run(&(ranked_list(), 1usize..200), |(list, k)| {
            n.set(n.get() + 1);
            let fused = fuse(std::slice::from_ref(&list), k).unwrap();
            let got: Vec<&str> = fused.iter().map(|f| f.passage_id.as_str()).collect();
            let want: Vec<&str> = list.passage_ids().collect();
            prop_assert_eq!(got, want);
            Ok(())
        })
        .map_err(|e| format!("single-list order: {e}"))?;
    counts[2] = n.replace(0);

    if counts.iter().any(|&c| c < 1000) {
        return Err(format!("too few instances: {counts:?}"));
    }
    Ok(format!(
        "permutation {} / monotonicity {} / single-list {} instances",
        counts[0], counts[1], counts[2]
    ))
}

fn metrics_oracle() -> Check {
    let mut pairs = 0;
    for &(pred, golds, em, want_f1) in SQUAD_REFERENCE {
        let got_em = exact_match(pred, golds).map_err(|e| e.to_string())?;
        let got_f1 = f1(pred, golds).map_err(|e| e.to_string())?;
        if got_em != em || (got_f1 - want_f1).abs() >= 1e-9 {
            return Err(format!("{pred:?} vs {golds:?}: EM {got_em} F1 {got_f1}"));
        }
        pairs += 1;
    }
    if pairs < 20 {
        return Err(format!("only {pairs} EM/F1 pairs"));
    }
    let words = prop::collection::vec(
        prop::sample::select(vec!["cat", "dog", "sat", "mat", "red", "x1"]),
        0..10,
    );
    let sequences = Cell::new(0u32);
    runner(200)
        .run(&(words.clone(), words), |(pred, gold)| {
            sequences.set(sequences.get() + 1);
            let got = rouge_l(&pred.join(" "), &gold.join(" "));
            let want = rouge_oracle(&pred, &gold);
            prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{pairs} EM/F1 pairs, {} ROUGE-L sequence pairs",
        sequences.get()
    ))
}

fn hermetic_end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    build_index(dir.path());
    let mut traces = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = run_stub(
            dir.path(),
            &[
                "eval",
                "--dataset",
                fixture("dataset.jsonl").to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ],
        );
        if !out.status.success() {
            return Err(format!("eval failed: {}", stderr(&out)));
        }
        traces.push(std::fs::read(out_dir.join("trace.jsonl")).map_err(|e| e.to_string())?);
    }
    if traces[0] != traces[1] {
        return Err("traces differ between runs".into());
    }
    let text = String::from_utf8(traces.remove(0)).map_err(|e| e.to_string())?;
    let sponsor: serde_json::Value = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["question_id"] == "sponsor")
        .ok_or("sponsor question missing from trace")?;
    if sponsor["context_rank"] != 3 || sponsor["em"] != 1 {
        return Err(format!("sponsor record: {sponsor}"));
    }
    Ok(format!(
        "{} trace lines identical across runs; {:?} selected from fused rank 3",
        text.lines().count(),
        sponsor["selected_answer"].as_str().unwrap_or_default()
    ))
}

fn main() -> ExitCode {
    let checks: [Criterion; 6] = [
        ("rrf worked example", rrf_worked_example),
        ("qualitative table reranking", qualitative_tables),
        ("bm25 oracle equivalence", bm25_oracle),
        ("fusion properties", fusion_properties),
        ("metrics oracle", metrics_oracle),
        ("hermetic end-to-end", hermetic_end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "SKIP  full-dataset benchmark scores: needs the complete QA datasets and a large generator; not part of this suite"
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
