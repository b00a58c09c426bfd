//! Turns a scenario into hydrodynamic matrices.

use uvctl_core::bem::BemSolver;
use uvctl_core::ellipsoid::EllipsoidGeometry;
use uvctl_core::hydro::{assemble, axial_ports, preset_ports, BodyInertia, ControlPort, HydroMatrices, PotentialSource};
use uvctl_core::linalg::V3;
use uvctl_core::mesh::{mesh_hull, HullShape};

use crate::scenario::{Hull, Scenario, Source};
use crate::CliError;

/// Piecewise-linear radius through `[y, r]` samples, zero outside.
pub fn profile_fn(samples: &[[f64; 2]]) -> impl Fn(f64) -> f64 + '_ {
    move |y| {
        let k = samples.partition_point(|s| s[0] <= y);
        if k == 0 || k == samples.len() {
            return 0.0;
        }
        let (a, b) = (samples[k - 1], samples[k]);
        a[1] + (b[1] - a[1]) * (y - a[0]) / (b[0] - a[0])
    }
}

/// Hull extents used to place bump ports.
fn port_scale(sc: &Scenario) -> V3 {
    match &sc.hull {
        Hull::Ellipsoid { axes } => V3::from(*axes),
        Hull::Revolution { profile } => {
            let half = 0.5 * (profile[profile.len() - 1][0] - profile[0][0]);
            let r = profile.iter().map(|s| s[1]).fold(0.0, f64::max);
            V3::new(half, r, r)
        }
    }
}

pub fn ports(sc: &Scenario) -> Result<Vec<ControlPort>, CliError> {
    let scale = port_scale(sc);
    match &sc.ports.preset {
        Some(p) if p == "axial" => match &sc.hull {
            Hull::Revolution { profile } => {
                let half = profile[0][0].abs().max(profile[profile.len() - 1][0].abs());
                Ok(axial_ports(half)?)
            }
            Hull::Ellipsoid { axes } => Ok(axial_ports(axes[0])?),
        },
        Some(p) => Ok(preset_ports(p, scale)?),
        None => sc
            .ports
            .custom
            .iter()
            .enumerate()
            .map(|(k, p)| {
                ControlPort::bump(&p.name, p.parity, V3::from(p.center), p.width, scale)
                    .map_err(|e| CliError::Config(format!("ports.custom[{k}]: {e}")))
            })
            .collect(),
    }
}

/// Assemble with the scenario's source; `force` overrides it.
pub fn build_with(sc: &Scenario, force: Option<Source>) -> Result<HydroMatrices, CliError> {
    let ports = ports(sc)?;
    let refine = sc.mesh.refine;
    match &sc.hull {
        Hull::Ellipsoid { axes } => {
            let geom = EllipsoidGeometry::new(axes[0], axes[1], axes[2])?;
            let bem = BemSolver::new(mesh_hull(&HullShape::Ellipsoid(&geom), refine)?)?;
            let inertia = BodyInertia::ellipsoid(&geom, sc.density.rho)?.scale_density(sc.density.lambda_scale)?;
            match force.or(sc.mesh.source).unwrap_or(Source::Analytic) {
                Source::Analytic => {
                    let grid = geom.surface_grid(sc.mesh.grid[0], sc.mesh.grid[1])?;
                    Ok(assemble(&PotentialSource::Analytic { geom: &geom, grid: &grid, panels: &bem }, &ports, &inertia)?)
                }
                Source::Bem => Ok(assemble(&PotentialSource::Bem(&bem), &ports, &inertia)?),
            }
        }
        Hull::Revolution { profile } => {
            if force == Some(Source::Analytic) {
                return Err(CliError::Config("hull: closed-form potentials exist only for ellipsoids".into()));
            }
            let f = profile_fn(profile);
            let (a, b) = (profile[0][0], profile[profile.len() - 1][0]);
            let bem = BemSolver::new(mesh_hull(&HullShape::Revolution { profile: &f, a, b }, refine)?)?;
            let rho = sc.density.rho;
            let inertia = BodyInertia::revolution(&f, a, b, &|_| rho)?.scale_density(sc.density.lambda_scale)?;
            Ok(assemble(&PotentialSource::Bem(&bem), &ports, &inertia)?)
        }
    }
}

pub fn build(sc: &Scenario) -> Result<HydroMatrices, CliError> {
    build_with(sc, None)
}
