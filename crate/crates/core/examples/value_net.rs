use stiffnet::calculus::weighted_square_net;
use stiffnet::sde::{EulerConfig, PathBundle};
use stiffnet::synth::{mc_reference, unroll_value_net, CoefficientNets};
use stiffnet::systems::RecipeSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 4;
    let recipe = RecipeSpec::by_id("galerkin_heat", d)?.build()?;
    let nets = CoefficientNets::new(recipe.mu_net.clone(), recipe.sigma_cols.clone(), 0)?;
    let (_, cost) = weighted_square_net(&[0.25; 4], 3.0, 1e-3)?;
    let cfg = EulerConfig::new(1.0, 16);
    let paths = PathBundle::new(42, 8, d);

    let (psi, report) = unroll_value_net(&nets, &recipe.system.a, &cost, cfg, &paths)?;
    let x = [0.2, 0.4, 0.6, 0.8];
    let direct = mc_reference(
        &recipe.system.a,
        &recipe.coeffs,
        &|y| cost.eval(y)[0],
        cfg,
        &paths,
        &x,
    )?;
    let net = psi.eval(&x)[0];
    assert!((net - direct).abs() <= 1e-8 * (1.0 + direct.abs()));
    println!("network {net:.6}, simulation {direct:.6}");
    println!("size {} (bound {}), depth {}", report.size, report.bound, report.depth);
    Ok(())
}
