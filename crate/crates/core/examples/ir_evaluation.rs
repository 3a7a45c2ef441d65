//! AP, nDCG and R-Precision on a hand-made ranking, then macro averaging.
//!
//!     cargo run --example ir_evaluation

use std::collections::{BTreeMap, BTreeSet};

use specfi::dense::RankedList;
use specfi::ir_metrics::{average_precision, evaluate, ndcg_at_k, r_precision};

fn ranked(query: &str, ids: &[&str]) -> RankedList {
    let n = ids.len();
    RankedList::from_scores(query, ids.iter().enumerate().map(|(i, id)| (id.to_string(), (n - i) as f64)), 100, 0)
}

fn main() -> specfi::Result<()> {
    let list = ranked("q1", &["a", "x", "b", "y", "c"]);
    let relevant: BTreeSet<String> = ["a", "b", "c", "d"].map(String::from).into();
    println!("ranking {:?}, relevant {:?}", list.doc_ids().collect::<Vec<_>>(), relevant);
    println!("AP        {:.4}", average_precision(&list, &relevant)?);
    println!("nDCG@3    {:.4}", ndcg_at_k(&list, &relevant, 3)?);
    println!("nDCG@10   {:.4}", ndcg_at_k(&list, &relevant, 10)?);
    println!("R-Prec    {:.4}", r_precision(&list, &relevant)?);

    let mut judgments = BTreeMap::new();
    judgments.insert("q1".to_string(), relevant);
    judgments.insert("q2".to_string(), ["z"].map(String::from).into());
    let lists = [list, ranked("q2", &["z", "a"])];
    let eval = evaluate("demo", &lists, &judgments)?;
    print!("\n{}", eval.to_csv()?);
    Ok(())
}
