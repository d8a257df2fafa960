//! Runs the full verification suite and prints one pass/fail line per
//! criterion. Tolerances are pinned inside `fracheat::accept`.

#[test]
fn acceptance() {
    let checks = fracheat::accept::run_all();
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "[{:2}] {} {} — {}",
            c.index,
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        if !c.pass {
            failed.push(format!("[{}] {}: {}", c.index, c.name, c.detail));
        }
    }
    assert!(
        failed.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failed.len(),
        failed.join("\n")
    );
}
