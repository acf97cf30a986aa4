// Scratch benchmark: substep cost at training scale.
use debone_core::knife::KnifeState;
use debone_core::mpm::*;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let meat = MaterialParams { lambda: 27.78, mu: 41.67, rho: 1000.0, yield_stress: 50.0 };
    let bone = MaterialParams { lambda: 222.22, mu: 333.33, rho: 2819.0, yield_stress: 5000.0 };
    for (res, ppc) in [(48usize, 1usize), (48, 2), (48, 4), (64, 8)] {
        let params = SimParams {
            grid_res: res,
            domain_size: 0.2,
            dt: 4e-4,
            ..SimParams::default()
        };
        let dx = params.dx();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Meat box 0.12 x 0.08 x 0.08 centered at (0.1, 0.1, 0.07), spheres r=0.021 at +-0.025 x.
        let lo = Vector3::new(0.04, 0.06, 0.03);
        let hi = Vector3::new(0.16, 0.14, 0.11);
        let ca = Vector3::new(0.075, 0.1, 0.07);
        let cb = Vector3::new(0.125, 0.1, 0.07);
        let mut particles = Vec::new();
        let n = |a: f64, b: f64| ((b - a) / dx).ceil() as usize;
        for i in 0..n(lo.x, hi.x) {
            for j in 0..n(lo.y, hi.y) {
                for k in 0..n(lo.z, hi.z) {
                    for _ in 0..ppc {
                        let pos = lo
                            + Vector3::new(
                                (i as f64 + rng.random_range(0.0..1.0)) * dx,
                                (j as f64 + rng.random_range(0.0..1.0)) * dx,
                                (k as f64 + rng.random_range(0.0..1.0)) * dx,
                            );
                        if pos.x > hi.x || pos.y > hi.y || pos.z > hi.z {
                            continue;
                        }
                        let is_bone = (pos - ca).norm() < 0.021 || (pos - cb).norm() < 0.021;
                        let (mat, id) = if is_bone { (bone, MaterialId::Bone) } else { (meat, MaterialId::Meat) };
                        particles.push(Particle::at_rest(pos, mat.rho * dx.powi(3) / ppc as f64, dx.powi(3) / ppc as f64, id));
                    }
                }
            }
        }
        let n_particles = particles.len();
        let mut sim = SimState::new(params, MaterialTable([meat, bone]), particles).unwrap();
        let mut knife = KnifeState::new(
            Vector3::new(0.1, 0.1, 0.135),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -std::f64::consts::FRAC_PI_2),
            Vector3::new(0.05, 0.001, 0.02),
            0.2,
        );
        knife.linear_velocity = Vector3::new(0.0, 0.0, -0.75);

        // Warm up (knife still above the block).
        for _ in 0..20 {
            sim.step(Some(&mut knife)).unwrap();
        }
        let steps = 250;
        let mut fsum = 0.0;
        let (mut t_p2g, mut t_grid, mut t_g2p) = (0.0, 0.0, 0.0);
        let t0 = Instant::now();
        for _ in 0..steps {
            let t = Instant::now();
            sim.p2g().unwrap();
            t_p2g += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let imp = sim.grid_update(Some(&knife));
            t_grid += t.elapsed().as_secs_f64();
            let t = Instant::now();
            sim.g2p().unwrap();
            t_g2p += t.elapsed().as_secs_f64();
            knife.force_accum += debone_core::knife::accumulate_knife_force(&imp, sim.params.dt, 200.0);
            knife.advance(sim.params.dt);
            fsum += knife.force_accum.norm();
            knife.force_accum = Vector3::zeros();
        }
        let el = t0.elapsed().as_secs_f64();
        println!(
            "  p2g {:.2} ms, grid {:.2} ms, g2p {:.2} ms",
            t_p2g / steps as f64 * 1e3,
            t_grid / steps as f64 * 1e3,
            t_g2p / steps as f64 * 1e3
        );
        println!(
            "res {res} ppc {ppc}: {n_particles} particles, {:.3} ms/substep  ({:.1} s for 1e6 substeps), mean |f| {:.4} N, knife z {:.3}",
            el / steps as f64 * 1e3,
            el / steps as f64 * 1e6,
            fsum / steps as f64,
            knife.position.z,
        );
    }
}
