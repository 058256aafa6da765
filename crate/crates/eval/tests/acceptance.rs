//! Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

fn main() {
    let results = wordbag_eval::evaluate(|c| println!("{c}"));
    let failed: Vec<usize> = results
        .iter()
        .filter(|c| !c.outcome.pass)
        .map(|c| c.number)
        .collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
