//! Small statistical tests used by the benchmark assertions.

/// One-sided 95% critical value of the standard normal.
pub const Z_95: f64 = 1.6448536269514722;

/// z statistic of the pooled one-sided two-proportion test for
/// H1: p1 > p2. Significant at 95% when the result exceeds [`Z_95`].
pub fn two_proportion_z(successes1: usize, n1: usize, successes2: usize, n2: usize) -> f64 {
    assert!(n1 > 0 && n2 > 0);
    let p1 = successes1 as f64 / n1 as f64;
    let p2 = successes2 as f64 / n2 as f64;
    let pooled = (successes1 + successes2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (p1 - p2) / se
}

/// Kendall S statistic: concordant minus discordant pairs against the
/// index order.
fn kendall_s(values: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            s += match values[j].partial_cmp(&values[i]).expect("finite values") {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    s
}

/// Exact one-sided Mann-Kendall permutation p-value for H1: the series
/// increases with its index. Enumerates every permutation of the observed
/// values (ties handled by construction), so it is exact for short series
/// (up to ~8 points).
pub fn mann_kendall_increasing_p(values: &[f64]) -> f64 {
    assert!(
        (2..=8).contains(&values.len()),
        "exact permutation test covers 2..=8 points"
    );
    let observed = kendall_s(values);
    let mut buf = values.to_vec();
    let mut at_least = 0u64;
    let mut total = 0u64;
    permute(&mut buf, 0, &mut |perm| {
        total += 1;
        if kendall_s(perm) >= observed {
            at_least += 1;
        }
    });
    at_least as f64 / total as f64
}

/// One-sided p-value for H1: the series decreases with its index.
pub fn mann_kendall_decreasing_p(values: &[f64]) -> f64 {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    mann_kendall_increasing_p(&negated)
}

fn permute(values: &mut Vec<f64>, start: usize, visit: &mut impl FnMut(&[f64])) {
    if start == values.len() {
        visit(values);
        return;
    }
    for i in start..values.len() {
        values.swap(start, i);
        permute(values, start + 1, visit);
        values.swap(start, i);
    }
}
