// Riccati gain versus a pole-placement gain for the average car.

use behavior_cloak::numerics::{eigenvalues, spectral_radius, ToleranceConfig};
use behavior_cloak::regulation::{check_stabilizing_gain, design_stabilizing_gain};
use behavior_cloak::vehicle;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tol = ToleranceConfig::default();
    let bank = vehicle::bank(vehicle::SAMPLE_PERIOD)?;
    let average = bank.require(2)?;

    for (name, gain) in [
        ("riccati", design_stabilizing_gain(average, &tol)?),
        ("pole placement", vehicle::pole_placed_gain()),
    ] {
        check_stabilizing_gain(average, &gain, &tol)?;
        let closed = average.a() + average.b() * &gain;
        let mut eig: Vec<f64> = eigenvalues(&closed)?.iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        println!("{name}: R = {:.4}  eig = {eig:.4?}  radius = {:.4}", gain, spectral_radius(&closed)?);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
