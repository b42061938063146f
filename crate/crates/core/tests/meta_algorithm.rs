use made_core::envs::make_random_mdp;
use made_core::meta::{frank_wolfe_maximize, run_algorithm1, DensityNoise, MetaConfig, MetaRun};
use made_core::mdp::TabularMdp;

fn final_gap(mdp: &TabularMdp, cfg: &MetaConfig, run: &MetaRun) -> f64 {
    let fw = frank_wolfe_maximize(
        mdp,
        run.final_cover.as_slice(),
        run.final_tau,
        cfg.smoothing,
        1e-4,
        10_000,
    )
    .unwrap();
    assert!(fw.gap <= 1e-4);
    fw.upper_bound() - run.final_objective(mdp, cfg.smoothing)
}

#[test]
fn preset_reaches_target_gap_and_tolerates_noise() {
    let mdp = make_random_mdp(5, 2, 0).unwrap();
    let cfg = MetaConfig::for_target_gap(0.05, 1.0, 5, 2).unwrap();
    let exact = run_algorithm1(&mdp, &cfg, None).unwrap();
    let gap = final_gap(&mdp, &cfg, &exact);
    eprintln!("exact gap {gap}");
    assert!(gap <= 0.05, "{gap}");

    let beta = cfg.constants(5, 2).beta;
    for scale in [0.5, 1.0] {
        let mut noisy_cfg = cfg.clone();
        noisy_cfg.density_err = scale * cfg.density_err;
        let noisy = run_algorithm1(&mdp, &noisy_cfg, Some(DensityNoise { seed: 9 })).unwrap();
        let noisy_gap = final_gap(&mdp, &noisy_cfg, &noisy);
        eprintln!("eps_d {} gap {noisy_gap}", noisy_cfg.density_err);
        assert!(noisy_gap - gap <= 2.0 * beta * noisy_cfg.density_err + 0.01);
    }
}

#[test]
fn objective_decreases_by_at_most_the_step_slack() {
    for seed in 0..3 {
        let mdp = make_random_mdp(4, 2, seed).unwrap();
        let mut cfg = MetaConfig::for_target_gap(0.1, 1.0, 4, 2).unwrap();
        cfg.iters = 150;
        for noise in [None, Some(DensityNoise { seed })] {
            let run = run_algorithm1(&mdp, &cfg, noise).unwrap();
            let consts = cfg.constants(4, 2);
            let eps_d = if noise.is_some() { cfg.density_err } else { 0.0 };
            for w in run.log.windows(2) {
                let slack = consts.step_slack(w[0].k, cfg.mix_rate, cfg.plan_err, eps_d);
                assert!(w[1].l_k >= w[0].l_k - slack, "k {}: {} -> {}", w[0].k, w[0].l_k, w[1].l_k);
            }
        }
    }
}
