//! Built-in problem configs. Each preset is config text, so it goes through
//! the same parser as user files and can be printed, edited and re-run.

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const PRESETS: [Preset; 4] = [
    Preset { name: "shear-iso", summary: "cyclic simple shear of a 4x4x1 plate, isotropic hardening, 12 load steps" },
    Preset { name: "shear-kin", summary: "cyclic simple shear of a 4x4x1 plate, kinematic hardening, 12 load steps" },
    Preset { name: "bimat", summary: "simple shear of a plate with a stronger central inclusion, one load step" },
    Preset { name: "plate-hole", summary: "quarter plate with a circular hole under cyclic tension, 4 load steps" },
];

const DESK_WIDTHS: &str = "3 32 3";
const FULL_WIDTHS: &str = "3 100 200 400 200 100 3";

const ELASTIC: &str = "mu = 384.62\nkappa = 833.33\n";

/// Engineering shear strain follows `y/4 · f`, so `f = ±0.5` is `γ = ±0.125`.
const CYCLIC_FACTORS: &str = "0.16666666666666666 0.3333333333333333 0.5 0.3333333333333333 0.16666666666666666 0 \
                              -0.16666666666666666 -0.3333333333333333 -0.5 -0.3333333333333333 -0.16666666666666666 0";

fn shear_bcs() -> String {
    let mut s = String::new();
    for side in ["x_min", "x_max", "y_min", "y_max"] {
        s += &format!("[dirichlet.ux_{side}]\nnodeset = {side}\naxis = x\nvalue = affine y/4\n\n");
        s += &format!("[dirichlet.uy_{side}]\nnodeset = {side}\naxis = y\nvalue = 0\n\n");
    }
    for side in ["z_min", "z_max"] {
        s += &format!("[dirichlet.uz_{side}]\nnodeset = {side}\naxis = z\nvalue = 0\n\n");
    }
    s
}

fn box_mesh(full_scale: bool) -> String {
    let n = if full_scale { 100 } else { 20 };
    format!("[mesh]\ngenerator = box\nextents = 4 4 1\ndivisions = {n} {n} 1\n\n")
}

fn network(full_scale: bool) -> String {
    let w = if full_scale { FULL_WIDTHS } else { DESK_WIDTHS };
    format!("[network]\nwidths = {w}\nseed = 0\nnormalize = true\n\n")
}

/// Config text of a preset, or `None` for an unknown name.
pub fn preset_text(name: &str, full_scale: bool) -> Option<String> {
    let opt = |tol: &str| format!("[optimizer]\nlr = 1.0\nlbfgs_memory = 20\npatience = 10\ntol = {tol}\nmax_iters_per_step = 2000\n\n");
    let text = match name {
        "shear-iso" | "shear-kin" => {
            let hardening = if name == "shear-iso" { "H = 500\nmode = isotropic" } else { "C = 500\nmode = kinematic" };
            format!(
                "# {name}\n{}[material.plate]\n{ELASTIC}sigma_y0 = 50\n{hardening}\n\n{}{}{}[loadsteps]\nfactors = {CYCLIC_FACTORS}\n\n\
                 [oracle]\nwaypoints = 0.125 -0.125 0\nsubsteps = 100\n",
                box_mesh(full_scale),
                network(full_scale),
                opt("1e-6"),
                shear_bcs()
            )
        }
        "bimat" => format!(
            "# bimat: material 1 everywhere, material 2 in the central square\n{}[elemset.inclusion]\nbox = 1 1 0 3 3 1\n\n\
             [material.soft]\n{ELASTIC}sigma_y0 = 50\nH = 500\n\n[material.hard]\n{ELASTIC}sigma_y0 = 60\nH = 500\nelemset = inclusion\n\n\
             {}{}{}[loadsteps]\nfactors = 0.5\n",
            box_mesh(full_scale),
            network(full_scale),
            opt("1e-6"),
            shear_bcs()
        ),
        "plate-hole" => {
            let (n_arc, n_radial, n_z) = if full_scale { (35, 48, 5) } else { (6, 8, 2) };
            format!(
                "# plate-hole: one eighth of an 8x8x2 plate with a radius 1.5 hole\n[mesh]\ngenerator = plate_hole\nhalf_width = 4\nradius = 1.5\nthickness = 1\n\
                 n_arc = {n_arc}\nn_radial = {n_radial}\nn_z = {n_z}\n\n[material.plate]\n{ELASTIC}sigma_y0 = 50\nH = 500\n\n{}{}\
                 [dirichlet.sym_x]\nnodeset = x_min\naxis = x\nvalue = 0\n\n[dirichlet.sym_y]\nnodeset = y_min\naxis = y\nvalue = 0\n\n\
                 [dirichlet.sym_z]\nnodeset = z_min\naxis = z\nvalue = 0\n\n[dirichlet.pull]\nnodeset = y_max\naxis = y\nvalue = 1\n\n\
                 [loadsteps]\nfactors = 0.06 0.12 0 -0.06\n",
                network(full_scale),
                opt("2e-5")
            )
        }
        _ => return None,
    };
    Some(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::Config;
    use std::path::Path;

    #[test]
    fn every_preset_parses_and_builds() {
        for p in &PRESETS {
            for full in [false, true] {
                let c = Config::parse(&preset_text(p.name, full).unwrap(), Path::new(p.name)).unwrap();
                if !full {
                    let prob = c.build_problem().unwrap();
                    crate::solver::Solver::new(prob, c.optimizer, None).unwrap();
                }
            }
        }
        assert!(preset_text("nope", false).is_none());
    }

    #[test]
    fn cyclic_program_shape() {
        let c = Config::parse(&preset_text("shear-kin", false).unwrap(), Path::new("x")).unwrap();
        assert_eq!(c.factors.len(), 12);
        assert_eq!(c.factors[2], 0.5);
        assert_eq!(c.factors[8], -0.5);
        assert_eq!(c.factors[11], 0.0);
    }

    #[test]
    fn bimat_inclusion_is_a_quarter_of_the_plate() {
        let c = Config::parse(&preset_text("bimat", false).unwrap(), Path::new("x")).unwrap();
        let m = c.build_mesh().unwrap();
        assert_eq!(m.element_count(), 400);
        assert_eq!(m.material.iter().filter(|&&id| id == 1).count(), 100);
    }
}
