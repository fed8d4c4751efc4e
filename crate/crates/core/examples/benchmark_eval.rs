//! Builds a small test benchmark and compares the stand-still and random baselines,
//! plus a trained policy when a checkpoint path is given.

use quadbal::evalbench::{
    build_benchmark, evaluate, report_table, BenchSpec, Controller, EvalMode, EvalOptions, EvalSetup, RangeSet,
};
use quadbal::learn::checkpoint_config;
use quadbal::nets::{load_checkpoint, Networks};

fn main() {
    let checkpoint = std::env::args().nth(1);
    let bench = build_benchmark(&BenchSpec::new(40, 2024, RangeSet::Test)).expect("benchmark");
    let stats = bench.mean_stats();
    println!(
        "{} episodes, mean path {:.2} m, mean speed {:.2} m/s",
        bench.len(),
        stats.path_length,
        stats.mean_speed
    );

    let (setup, nets) = match checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path.as_ref()).expect("readable checkpoint");
            let setup = EvalSetup::from_config(&checkpoint_config(&ck).unwrap_or_default());
            setup.check_compatible(&ck.spec).expect("compatible checkpoint");
            (setup, Some(Networks::from_store(ck.spec, ck.params).expect("consistent checkpoint")))
        }
        None => (EvalSetup::default(), None),
    };

    let mut controllers = vec![Controller::StandStill, Controller::Random { seed: 1 }];
    if let Some(n) = &nets {
        controllers.insert(0, Controller::Policy { nets: n, mode: EvalMode::Estimated });
    }
    let opts = EvalOptions::default();
    let reports: Vec<_> = controllers
        .iter()
        .map(|c| evaluate(&setup, c, &bench, &opts).expect("evaluation").0)
        .collect();
    print!("{}", report_table(&reports));
}
