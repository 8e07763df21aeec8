//! Bundled verification battery: exact-identity checks on exhaustively
//! enumerable boxes plus closed-form renewal and pinning oracles. Every
//! check prints one line with its residual and tolerance; the battery
//! passes only if every residual is within tolerance.

use defectline::lattice::{LatticeBox, PercParams};
use defectline::oracle::{
    change_of_measure_check, enumerate_connectivity, lemma_ratio_check, russo_derivative_check,
    strip_transfer_connectivity,
};
use defectline::renewal::{
    first_return_law, pinning_free_energy, radius_root, renewal_limit_check, tilted_return_law,
};

use crate::commands::demo_kernel;
use crate::error::CliError;

struct Check {
    name: String,
    residual: f64,
    tol: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.tol
    }
}

fn endpoints(bbox: &LatticeBox) -> (u32, u32) {
    (bbox.axis_vertex(0), bbox.axis_vertex(bbox.n()))
}

fn battery() -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();

    // Reweighting identity: the defect-line connectivity equals the
    // homogeneous expectation of the exponential line interaction, on every
    // exhaustively enumerable box.
    let pairs = [(0.45, 0.9), (0.3, 0.6), (0.7, 0.2)];
    let mut boxes: Vec<(u32, u32, u32, &[(f64, f64)])> = vec![
        (2, 2, 1, &pairs),
        (2, 3, 1, &pairs),
        (3, 2, 0, &pairs),
        (3, 4, 0, &pairs),
    ];
    let big = [(0.45, 0.9)];
    boxes.push((2, 4, 1, &big));
    for (d, n, w, pair_list) in boxes {
        let bbox = LatticeBox::new(d, n, w)?;
        let (x, y) = endpoints(&bbox);
        for &(p, p_line) in pair_list {
            let params = PercParams::new(d, p, p_line)?;
            let check = change_of_measure_check(&bbox, &params, x, y)?;
            checks.push(Check {
                name: format!("reweighting identity d={d} n={n} w={w} p={p} p_line={p_line}"),
                residual: check.abs_err(),
                tol: 1e-12,
            });
        }
    }

    // Derivative identity: centered finite difference of the connectivity in
    // the line probability against the exact pivotal sum, plus the
    // second-order convergence ratio of the refinement.
    for (d, n, w, p, p_line) in [(2, 2, 1, 0.45, 0.6), (2, 3, 1, 0.5, 0.8)] {
        let bbox = LatticeBox::new(d, n, w)?;
        let (x, y) = endpoints(&bbox);
        let params = PercParams::new(d, p, p_line)?;
        let russo = russo_derivative_check(&bbox, &params, x, y, 1e-4)?;
        checks.push(Check {
            name: format!("derivative vs pivotal sum d={d} n={n} w={w} p={p} p_line={p_line}"),
            residual: russo.err,
            tol: 1e-7,
        });
        checks.push(Check {
            name: format!("finite-difference order ratio d={d} n={n} w={w}"),
            // A missing ratio means both differences are already at
            // roundoff, which is itself a pass.
            residual: russo.richardson.map_or(0.0, |r| (r - 4.0).abs()),
            tol: 0.5,
        });
    }

    // Ratio identity: connectivity ratio across line probabilities equals
    // the exponential of the integrated conditional pivotal count.
    for (d, n, w, p) in [(2, 2, 1, 0.45), (3, 3, 0, 0.5)] {
        let bbox = LatticeBox::new(d, n, w)?;
        let (x, y) = endpoints(&bbox);
        let params = PercParams::new(d, p, 0.4)?;
        let ratio = lemma_ratio_check(&bbox, &params, x, y, 0.4, 0.6)?;
        checks.push(Check {
            name: format!("integrated pivotal ratio d={d} n={n} w={w} p={p}"),
            residual: ratio.rel_err(),
            tol: 1e-8,
        });
    }

    // Strip transfer recursion against direct enumeration on every
    // co-feasible geometry.
    for w in [0u32, 1] {
        for n in [2u32, 3, 4] {
            let (p, p_line) = (0.45, 0.7);
            let bbox = LatticeBox::new(2, n, w)?;
            let (x, y) = endpoints(&bbox);
            let params = PercParams::new(2, p, p_line)?;
            let exact = enumerate_connectivity(&bbox, &params, x, y)?;
            let strip = strip_transfer_connectivity(p, p_line, w, n)?;
            checks.push(Check {
                name: format!("strip transfer vs enumeration n={n} w={w}"),
                residual: (strip - exact).abs() / exact,
                tol: 1e-12,
            });
        }
    }

    // Renewal limit theorem, closed forms: geometric weights give a scaled
    // sequence pinned at 1/2; the trivial kernel gives the constant 1.
    let geo = renewal_limit_check(&demo_kernel("geometric"), 2_000)?;
    checks.push(Check {
        name: "renewal limit geometric kernel".to_string(),
        residual: (geo.root.r - 1.0)
            .abs()
            .max((geo.scaled[1] - 0.5).abs())
            .max(geo.deviation()),
        tol: 1e-13,
    });
    let unit = renewal_limit_check(&[1.0], 500)?;
    checks.push(Check {
        name: "renewal limit unit kernel".to_string(),
        residual: (unit.root.r - 1.0).abs().max(unit.deviation()),
        tol: 1e-13,
    });
    let half = radius_root(&[0.5])?;
    checks.push(Check {
        name: "radius root half-weight kernel".to_string(),
        residual: (half.r - 2.0).abs().max((half.mean - 1.0).abs()),
        tol: 1e-12,
    });

    // Pinning closed forms for the one-dimensional walk. The free energy at
    // strength 1 decays fast enough that a 2e4 horizon already determines it
    // far beyond the checked precision.
    let law = first_return_law(1, 20_000)?;
    let f1 = pinning_free_energy(1.0, &law)?;
    let closed = -0.5 * (2.0 * (-1.0f64).exp() - (-2.0f64).exp()).ln();
    checks.push(Check {
        name: "pinning free energy closed form (d=1, eps=1)".to_string(),
        residual: (f1.f_value - closed).abs(),
        tol: 1e-10,
    });
    let f0 = pinning_free_energy(0.0, &law)?;
    checks.push(Check {
        name: "pinning free energy vanishes at zero strength".to_string(),
        residual: f0.f_value,
        tol: 0.0,
    });
    let tilted = tilted_return_law(1.0, &law)?;
    let qsum: f64 = tilted.q.iter().sum();
    checks.push(Check {
        name: "tilted return law is a probability law".to_string(),
        residual: (qsum - 1.0).abs(),
        tol: 1e-10,
    });

    Ok(checks)
}

/// Runs the battery, prints the report, and returns whether all checks
/// passed.
pub fn run() -> Result<bool, CliError> {
    let checks = battery()?;
    let mut failures = 0usize;
    for check in &checks {
        let status = if check.pass() { "ok  " } else { "FAIL" };
        if !check.pass() {
            failures += 1;
        }
        println!(
            "{status}  {:<64} residual {:.3e}  (tol {:.1e})",
            check.name, check.residual, check.tol
        );
    }
    println!("verify: {} checks, {failures} failures", checks.len());
    Ok(failures == 0)
}
