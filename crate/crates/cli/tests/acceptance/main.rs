//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p salbias --test acceptance`. The process exits
//! nonzero when any criterion fails.

#[path = "../common/mod.rs"]
mod common;
mod kernels;
mod pipeline;
mod study;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

pub type Outcome = Result<String, String>;

/// Fails the criterion with a message unless `cond` holds.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    check: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        name: "auroc-oracle-equivalence",
        budget: Some(Duration::from_secs(10)),
        check: kernels::auroc_oracle_equivalence,
    },
    Criterion {
        name: "auroc-identities",
        budget: None,
        check: kernels::auroc_identities,
    },
    Criterion {
        name: "mean-recall-linearity",
        budget: None,
        check: kernels::mean_recall_linearity,
    },
    Criterion {
        name: "bin-partition-and-boundaries",
        budget: None,
        check: kernels::bin_partition,
    },
    Criterion {
        name: "semantic-metric-suite",
        budget: None,
        check: kernels::semantic_suite,
    },
    Criterion {
        name: "end-to-end-monotone-trend",
        budget: Some(Duration::from_secs(60)),
        check: pipeline::monotone_trend,
    },
    Criterion {
        name: "enhancement-delta-arithmetic",
        budget: None,
        check: pipeline::enhancement_delta,
    },
    Criterion {
        name: "study-service-integrity",
        budget: None,
        check: study::integrity,
    },
];

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| Err(panic_message(p)));
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {} ({detail}; {elapsed:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {why}", c.name);
            }
        }
    }
    println!("{} passed, {failed} failed", CRITERIA.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
