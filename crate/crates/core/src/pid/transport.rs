//! Exact transportation linear program, solved by negative-cycle canceling
//! on the residual graph.

/// Maximizes `sum gain[i][j] * x[i][j]` over `x >= 0` with row sums `supply`
/// and column sums `demand`. `gain` is row-major `supply.len() x demand.len()`.
///
/// Supplies and demands must be nonnegative with equal totals.
pub fn max_gain_transport(gain: &[f64], supply: &[f64], demand: &[f64]) -> Vec<f64> {
    let (rows, cols) = (supply.len(), demand.len());
    debug_assert_eq!(gain.len(), rows * cols);
    let mut flow = northwest_corner(supply, demand);
    let total: f64 = supply.iter().sum();
    let eps = 1e-15 * total.max(f64::MIN_POSITIVE);
    let scale = gain.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let slack = 1e-12 * scale;

    // nodes: rows 0..rows, columns rows..rows+cols. Arc row -> column costs
    // -gain and is uncapacitated; column -> row costs +gain and exists only
    // while the cell carries flow.
    let nodes = rows + cols;
    let mut dist = vec![0.0; nodes];
    let mut pred = vec![usize::MAX; nodes];
    for _ in 0..10_000 {
        dist.iter_mut().for_each(|d| *d = 0.0);
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        let mut last = None;
        for _ in 0..nodes {
            last = None;
            for i in 0..rows {
                for j in 0..cols {
                    let nd = dist[i] - gain[i * cols + j];
                    if nd < dist[rows + j] - slack {
                        dist[rows + j] = nd;
                        pred[rows + j] = i;
                        last = Some(rows + j);
                    }
                    if flow[i * cols + j] > eps {
                        let nd = dist[rows + j] + gain[i * cols + j];
                        if nd < dist[i] - slack {
                            dist[i] = nd;
                            pred[i] = rows + j;
                            last = Some(i);
                        }
                    }
                }
            }
            if last.is_none() {
                return flow;
            }
        }
        // still relaxing after `nodes` rounds: walk back onto the cycle
        let mut v = last.expect("relaxation happened");
        for _ in 0..nodes {
            v = pred[v];
        }
        let mut cycle = vec![v];
        let mut u = pred[v];
        while u != v {
            cycle.push(u);
            u = pred[u];
        }
        // cycle lists nodes against arc direction: pred[cycle[t]] == cycle[t + 1]
        let mut amount = f64::INFINITY;
        let mut cost = 0.0;
        for t in 0..cycle.len() {
            let (to, from) = (cycle[t], cycle[(t + 1) % cycle.len()]);
            if from >= rows {
                amount = amount.min(flow[to * cols + (from - rows)]);
                cost += gain[to * cols + (from - rows)];
            } else {
                cost -= gain[from * cols + (to - rows)];
            }
        }
        if !(amount > eps) || cost >= -slack {
            return flow;
        }
        for t in 0..cycle.len() {
            let (to, from) = (cycle[t], cycle[(t + 1) % cycle.len()]);
            if from >= rows {
                let cell = &mut flow[to * cols + (from - rows)];
                *cell = (*cell - amount).max(0.0);
            } else {
                flow[from * cols + (to - rows)] += amount;
            }
        }
    }
    log::warn!("transport cycle canceling hit its iteration cap");
    flow
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Vec<f64> {
    let cols = demand.len();
    let mut flow = vec![0.0; supply.len() * cols];
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    while i < s.len() && j < cols {
        let amount = s[i].min(d[j]);
        flow[i * cols + j] += amount;
        s[i] -= amount;
        d[j] -= amount;
        if s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    // rounding leftovers go to the last cell that can take them
    let leftover = s.iter().sum::<f64>();
    if leftover.abs() > 0.0 && !flow.is_empty() {
        let last = flow.len() - 1;
        flow[last] = (flow[last] + leftover).max(0.0);
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Enumerates all 0/1-structured vertices of a tiny problem by brute
    /// force over a fine grid of the single free parameter of a 2x2 problem.
    fn brute_2x2(gain: &[f64], supply: &[f64], demand: &[f64]) -> f64 {
        let lo = (supply[0] - demand[1]).max(0.0);
        let hi = supply[0].min(demand[0]);
        let mut best = f64::NEG_INFINITY;
        for step in 0..=1000 {
            let t = lo + (hi - lo) * step as f64 / 1000.0;
            let x = [t, supply[0] - t, demand[0] - t, supply[1] - demand[0] + t];
            best = best.max(x.iter().zip(gain).map(|(a, b)| a * b).sum());
        }
        best
    }

    fn value(gain: &[f64], x: &[f64]) -> f64 {
        x.iter().zip(gain).map(|(a, b)| a * b).sum()
    }

    fn check_marginals(x: &[f64], supply: &[f64], demand: &[f64]) {
        let cols = demand.len();
        for (i, s) in supply.iter().enumerate() {
            let got: f64 = x[i * cols..(i + 1) * cols].iter().sum();
            assert!((got - s).abs() < 1e-14, "row {i}: {got} vs {s}");
        }
        for (j, d) in demand.iter().enumerate() {
            let got: f64 = (0..supply.len()).map(|i| x[i * cols + j]).sum();
            assert!((got - d).abs() < 1e-14, "col {j}: {got} vs {d}");
        }
        assert!(x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn two_by_two_matches_grid() {
        let cases: [([f64; 4], [f64; 2], [f64; 2]); 4] = [
            ([1.0, 0.0, 0.0, 1.0], [0.5, 0.5], [0.5, 0.5]),
            ([0.0, 2.0, 2.0, 1.0], [0.5, 0.25], [0.5, 0.25]),
            ([-1.0, 3.0, 0.5, -2.0], [0.1, 0.3], [0.25, 0.15]),
            ([0.3, 0.3, 0.3, 0.3], [0.2, 0.2], [0.1, 0.3]),
        ];
        for (gain, supply, demand) in cases {
            let x = max_gain_transport(&gain, &supply, &demand);
            check_marginals(&x, &supply, &demand);
            assert!((value(&gain, &x) - brute_2x2(&gain, &supply, &demand)).abs() < 1e-12);
        }
    }

    #[test]
    fn assignment_structure() {
        // 3x3 with unit supplies is an assignment problem
        let gain = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let x = max_gain_transport(&gain, &[1.0; 3], &[1.0; 3]);
        check_marginals(&x, &[1.0; 3], &[1.0; 3]);
        // best permutation: 0->0 (4), 1->2 (5), 2->1 (2) = 11
        assert!((value(&gain, &x) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn rectangular_and_zero_rows() {
        let gain = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let supply = [0.0, 1.0];
        let demand = [0.2, 0.3, 0.5];
        let x = max_gain_transport(&gain, &supply, &demand);
        check_marginals(&x, &supply, &demand);
        assert!((value(&gain, &x) - (0.2 * 4.0 + 0.3 * 5.0 + 0.5 * 6.0)).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn beats_every_northwest_ordering(
            gain in proptest::collection::vec(-5.0f64..5.0, 9),
            supply in proptest::collection::vec(0.0f64..1.0, 3),
            demand in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            let total_s: f64 = supply.iter().sum();
            proptest::prop_assume!(total_s > 1e-3);
            let total_d: f64 = demand.iter().sum();
            let demand: Vec<f64> = demand.iter().map(|d| d * total_s / total_d).collect();
            let x = max_gain_transport(&gain, &supply, &demand);
            let best = value(&gain, &x);
            // every row/column ordering of the northwest-corner rule is a vertex
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            for rp in perms {
                for cp in perms {
                    let s: Vec<f64> = rp.iter().map(|&i| supply[i]).collect();
                    let d: Vec<f64> = cp.iter().map(|&j| demand[j]).collect();
                    let y = northwest_corner(&s, &d);
                    let mut v = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            v += y[a * 3 + b] * gain[rp[a] * 3 + cp[b]];
                        }
                    }
                    proptest::prop_assert!(best >= v - 1e-9);
                }
            }
        }
    }
}
