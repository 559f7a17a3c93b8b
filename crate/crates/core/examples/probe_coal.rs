use std::time::Instant;
use cplab_core::ancestry;
use cplab_core::harris::{HarrisConstruction, Window};
use cplab_core::kernel::Kernel;
use cplab_core::seeding;

fn main() {
    let kernel = Kernel::nearest_neighbour();
    let lambda = 4.0;
    for (margin, horizon) in [(15.0f64, 80.0f64), (15.0, 95.0)] {
        let reach = (3.0 * horizon).ceil() as i64;
        let window = Window::new(-reach - 17, reach + 33);
        let t0 = Instant::now();
        let mut n_censored = 0;
        let reps = 60;
        for rep in 0..reps {
            let seed = seeding::derive(7, &[rep]);
            let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed).unwrap();
            for sep in [1i64, 4, 16] {
                let out = ancestry::coalescence_time(&h, 0, sep, margin);
                if out.value.kind == ancestry::CoalescenceKind::Censored { n_censored += 1; }
            }
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("margin {margin} horizon {horizon}: {:.1} ms/replica ({n_censored} censored of {})", dt * 1000.0 / reps as f64, 3 * reps);
    }
    let reach = (3.0f64 * 95.0).ceil() as i64;
    let window = Window::new(-reach - 17, reach + 33);
    let t0 = Instant::now();
    for rep in 0..60u64 {
        let seed = seeding::derive(7, &[rep]);
        let h = HarrisConstruction::sample(&kernel, lambda, window, 95.0, seed).unwrap();
        std::hint::black_box(h.event_count());
    }
    println!("sampling alone: {:.1} ms/replica", t0.elapsed().as_secs_f64() * 1000.0 / 60.0);
    let h = HarrisConstruction::sample(&kernel, lambda, window, 95.0, seeding::derive(9, &[1])).unwrap();
    let t0 = Instant::now();
    for x in 0..40i64 {
        let mut hier = ancestry::Hierarchy::new(&h, x);
        hier.step_to(95.0);
        std::hint::black_box(hier.len());
    }
    println!("hierarchy sweep to 95: {:.2} ms each", t0.elapsed().as_secs_f64() * 1000.0 / 40.0);
}
