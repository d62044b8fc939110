use kamred::kam_driver::*;
use kamred::kam_step::LieParams;
use kamred::lattice::*;
use kamred::linop::*;
use kamred::harmonics::CentralFunction;
use kamred::C64;

fn main() {
    let mut p = PhiPolynomial::new();
    p.insert(vec![1, 0], CentralFunction::from_pairs(&[(1, C64::new(0.5, 0.0))]));
    p.insert(vec![-1, 0], CentralFunction::from_pairs(&[(1, C64::new(0.5, 0.0))]));
    p.insert(vec![0, 1], CentralFunction::from_pairs(&[(2, C64::new(0.25, -0.125))]));
    p.insert(vec![0, -1], CentralFunction::from_pairs(&[(2, C64::new(0.25, 0.125))]));
    p.insert(vec![1, 1], CentralFunction::from_pairs(&[(0, C64::new(0.0, 0.2))]));
    p.insert(vec![-1, -1], CentralFunction::from_pairs(&[(0, C64::new(0.0, -0.2))]));
    let model = NlsModel {
        group: GroupSpec::new(GroupKind::Su2),
        d: 2,
        freq: FrequencyDirection::default_2d_scaled(100),
        mass: 1.0,
        eps: 1e-3,
        forcing: ForcingSpec::LinearPotential { potential: p },
        trunc: Truncation { l_max: 8, m_max: 8, h_cap: 16 },
    };
    let sched = Schedule::new(4, 3, 5.0, 1e-2, LieParams::default(), 16.0);
    let grid = lambda_grid(31);
    let res = iterate(&model, &sched, &grid, KeepTransforms::None).unwrap();
    println!("initial residual s0 = {:.6e}", res.initial_residual_s0);
    for o in &res.outcomes {
        let tag = if o.accepted { "ACC" } else { "rej" };
        println!(
            "λ={:.4} {} steps={} resid={:?} rej={:?}",
            o.lambda,
            tag,
            o.steps_done,
            o.residuals_s0.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>(),
            o.rejection.as_ref().map(|r| match r {
                Rejection::Screen { step, witness } => format!("screen@{step}: {witness}"),
                Rejection::Abort { step, reason } => format!("abort@{step}: {reason}"),
                Rejection::Residual { final_rel } => format!("residual {final_rel:.2e}"),
            })
        );
    }
}
