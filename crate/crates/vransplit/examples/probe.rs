// Scratch tuning probe; removed before release.
use std::time::Instant;

use vransplit::inference::{evaluate_suite, lambda_sweep, SearchConfig};
use vransplit::model::{build_instance, ScenarioConfig};
use vransplit::topology::{generate_waxman, WaxmanConfig};
use vransplit::trainer::{train_epoch, TrainConfig, TrainState};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_dus: usize = args.get(1).map_or(15, |a| a.parse().unwrap());
    let epochs: usize = args.get(2).map_or(2000, |a| a.parse().unwrap());
    let batch: usize = args.get(3).map_or(64, |a| a.parse().unwrap());
    let lr: f64 = args.get(4).map_or(3e-4, |a| a.parse().unwrap());
    let seed: u64 = args.get(5).map_or(1, |a| a.parse().unwrap());

    let mut topo = generate_waxman(
        &WaxmanConfig {
            n_nodes: n_dus + 1,
            ..WaxmanConfig::default()
        },
        seed,
    )
    .unwrap();
    topo.rescale_max_path_delay(3_658.61);
    let mut delays: Vec<f64> = topo.paths.iter().map(|p| p.total_delay_us).collect();
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("path delays: {:?}", delays.iter().map(|d| d.round()).collect::<Vec<_>>());

    let instance = build_instance(topo, &ScenarioConfig::default()).unwrap();
    println!("dran J = {:.4}", instance.dran_report().unwrap().total);

    let config = TrainConfig {
        epochs,
        batch_size: batch,
        agent_lr: lr,
        critic_lr: 0.005,
        seed,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&config);
    let start = Instant::now();
    let mut zero_xi_streak = 0usize;
    for e in 0..epochs {
        let r = train_epoch(&mut state, &instance, &config).unwrap();
        if r.mean_xi == 0.0 {
            zero_xi_streak += 1;
        } else {
            zero_xi_streak = 0;
        }
        if e % 200 == 0 || e == epochs - 1 {
            println!(
                "epoch {:5}  J {:8.4}  xi {:10.6}  critic {:10.4}  gnorm {:8.4}  [{:6.1}s, streak {}]",
                r.epoch,
                r.mean_j,
                r.mean_xi,
                r.critic_loss,
                r.grad_norm,
                start.elapsed().as_secs_f64(),
                zero_xi_streak
            );
        }
    }
    println!("train wall: {:.1}s ({:.1} ms/epoch)", start.elapsed().as_secs_f64(), start.elapsed().as_secs_f64() * 1000.0 / epochs as f64);

    let eval_start = Instant::now();
    let sweep = lambda_sweep(&instance, 10.0, 150.0, 5);
    let table = evaluate_suite(
        &state.policy,
        &sweep,
        &SearchConfig { sample_count: 1280, seed, ..SearchConfig::default() },
        &[0.5, 1.0, 1.5, 2.0, 2.5],
    )
    .unwrap();
    for row in &table.rows {
        println!(
            "{:16}  J_search {:9.4}  J_opt {:9.4}  gap {:7.4}%  dran {:9.4}  feas {}",
            row.instance_id,
            row.j_search,
            row.j_opt.unwrap_or(f64::NAN),
            row.gap_percent.unwrap_or(f64::NAN),
            row.j_dran,
            row.search_feasible
        );
    }
    println!(
        "mean gap {:.4}%  max {:.4}%  eval wall {:.1}s",
        table.mean_gap_percent().unwrap_or(f64::NAN),
        table.max_gap_percent().unwrap_or(f64::NAN),
        eval_start.elapsed().as_secs_f64()
    );
}
