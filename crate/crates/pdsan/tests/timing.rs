//! Timing probes for the training hot path (run explicitly with --ignored).

use std::time::Instant;

use ndarray::Array2;
use pdsan::actor::{InputCoding, NeuronKind, SpikingActor, SpikingActorConfig};
use pdsan::critic::Critic;
use pdsan::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn time<F: FnMut()>(label: &str, iters: usize, mut f: F) {
    let t0 = Instant::now();
    for _ in 0..iters {
        f();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    println!("{label}: {:.3} ms", dt * 1e3);
}

fn probe<T: Scalar>(tag: &str) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = SpikingActorConfig::<T> {
        coding: InputCoding::Pop,
        neuron: NeuronKind::Dn,
        ..SpikingActorConfig::default()
    };
    let actor = SpikingActor::new(
        &cfg,
        &[T::from_f64(-1.0), T::from_f64(-1.0), T::from_f64(-8.0)],
        &[T::from_f64(1.0), T::from_f64(1.0), T::from_f64(8.0)],
        1,
        &mut rng,
    );
    let critic = Critic::<T>::new(3, 1, &mut rng);
    let states = Array2::from_shape_fn((100, 3), |(i, j)| T::from_f64(((i * 7 + j) as f64 * 0.1).sin()));
    let actions = Array2::from_shape_fn((100, 1), |(i, _)| T::from_f64((i as f64 * 0.03).cos() * 0.9));

    let mut r2 = ChaCha8Rng::seed_from_u64(1);
    time(&format!("{tag} san fwd notrace x100"), 20, || {
        let _ = actor.forward_batch(&states.view(), &mut r2, false).unwrap();
    });
    time(&format!("{tag} san fwd trace x100"), 20, || {
        let _ = actor.forward_batch(&states.view(), &mut r2, true).unwrap();
    });
    let (_, trace) = actor.forward_batch(&states.view(), &mut r2, true).unwrap();
    let trace = trace.unwrap();
    let ga = Array2::from_elem((100, 1), T::from_f64(0.01));
    time(&format!("{tag} san bwd x100"), 20, || {
        let _ = actor.backward_batch(&trace, &ga.view()).unwrap();
    });
    time(&format!("{tag} critic fwd x100"), 50, || {
        let _ = critic.q_batch(&states.view(), &actions.view()).unwrap();
    });
    let (_, ctrace) = critic.q_batch(&states.view(), &actions.view()).unwrap();
    let gq = ndarray::Array1::from_elem(100, T::from_f64(0.02));
    time(&format!("{tag} critic bwd x100"), 50, || {
        let _ = critic.backward(&ctrace, &gq.view()).unwrap();
    });
    time(&format!("{tag} san act x1"), 200, || {
        let _ = actor.act(&[T::from_f64(0.3), T::from_f64(0.2), T::from_f64(1.0)], &mut r2);
    });

    // raw gemm reference
    let a = Array2::from_shape_fn((100, 256), |(i, j)| T::from_f64(((i + j) as f64 * 0.01).sin()));
    let b = Array2::from_shape_fn((256, 256), |(i, j)| T::from_f64(((i * j) as f64 * 0.001).cos()));
    time(&format!("{tag} gemm 100x256x256"), 100, || {
        let _ = a.dot(&b);
    });
}

#[test]
#[ignore]
fn perf_probe() {
    probe::<f32>("f32");
    probe::<f64>("f64");
}

use pdsan::config::RunConfig;
use pdsan::harness::build_trainer;


fn steps_per_sec(algo: &str, steps: usize) -> f64 {
    let toml = format!(
        "env = \"pendulum\"\nalgo = \"{algo}\"\ntotal_steps = {steps}\nwarmup_steps = 200\neval_every = 1000000"
    );
    let cfg = RunConfig::from_toml_str(&toml).unwrap().validate().unwrap();
    let mut tr = build_trainer::<f32>(&cfg).unwrap();
    // fill the buffer first so every timed step includes updates
    for _ in 0..300 {
        tr.train_step().unwrap();
    }
    let t0 = Instant::now();
    for _ in 0..steps {
        tr.train_step().unwrap();
    }
    steps as f64 / t0.elapsed().as_secs_f64()
}

#[test]
#[ignore]
fn trainer_step_rate() {
    for algo in ["td3", "td3-pop", "td3-popsan", "td3-pdsan"] {
        let rate = steps_per_sec(algo, 600);
        println!("{algo}: {:.1} steps/s ({:.2} ms/step)", rate, 1000.0 / rate);
    }
}

