//! The cubic-potential picture of conversion: turning points, the
//! semiclassical efficiency bound and one integrated trajectory.

use xdce::semiclassical::{eta_sc, integrate_ode, period, potential_minimum, turning_point, SemiclassicalParams};

fn main() -> xdce::Result<()> {
    let p = SemiclassicalParams::new(0.01, 750.0, 248.0)?;
    let tp = turning_point(&p);
    println!("E = 750, n0 = 248: well bottom {:.2}, turning point {:.2}", potential_minimum(&p), tp.n1);

    println!("{:>6} {:>8} {:>8}", "n0/E", "eta_sc", "n_max/E");
    for i in 0..=9 {
        let n0 = 75.0 * i as f64;
        let sc = eta_sc(&SemiclassicalParams::new(0.01, 750.0, n0)?);
        println!("{:>6.2} {:>8.4} {:>8.4}", n0 / 750.0, sc.eta_max, sc.photon_fraction);
    }

    let start = SemiclassicalParams::for_product(0.01, 0, 50)?;
    let t = period(&start)?;
    let sol = integrate_ode(&start, t, t / 40.0)?;
    println!("|0, 50>: period {t:.1}, energy drift {:.1e}", sol.energy_drift);
    for (t, n) in sol.times.iter().zip(&sol.n).step_by(2) {
        println!("{t:>8.1} {n:>8.3}");
    }
    Ok(())
}
