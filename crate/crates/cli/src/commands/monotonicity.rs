use multiphase::io::{write_profile_csv, Report};
use multiphase::theory::{default_epsilon, halfplanes_preset, monotonicity_profile, sectors_preset, ProfileRow};

use super::{resolve, Context};
use crate::config::{self, Preset, RadiiCfg};
use crate::error::CliError;
use crate::plot::{self, Series};

const DEFAULT_PRESET_H: f64 = 1.0 / 512.0;

pub fn run(mut ctx: Context) -> Result<(), CliError> {
    let mcfg = ctx
        .config
        .monotonicity
        .clone()
        .ok_or_else(|| CliError::Config("missing [monotonicity] section".into()))?;

    let (domain, fields) = match (mcfg.preset, &mcfg.fields) {
        (Some(preset), None) => {
            let h = mcfg.h.unwrap_or(DEFAULT_PRESET_H);
            if !(h > 0.0 && h <= 0.125) {
                return Err(CliError::Config(format!("monotonicity.h must be in (0, 1/8], got {h}")));
            }
            match preset {
                Preset::Halfplanes => halfplanes_preset(h)?,
                Preset::Sectors => sectors_preset(h)?,
            }
        }
        (None, Some(paths)) => {
            let domain = ctx.domain()?;
            let fields = paths
                .iter()
                .map(|p| config::read_field(&resolve(&ctx.base_dir, p), &domain))
                .collect::<Result<Vec<_>, _>>()?;
            (domain, fields)
        }
        _ => {
            return Err(CliError::Config(
                "monotonicity: give exactly one of `preset` or `fields`".into(),
            ))
        }
    };
    let dim = domain.dim();
    let h = domain.h();
    let center = mcfg.center.clone().unwrap_or_else(|| vec![0.0; dim]);
    if center.len() != dim {
        return Err(CliError::Config(format!("monotonicity.center must have {dim} coordinates")));
    }
    let radii = mcfg
        .radii
        .clone()
        .unwrap_or(RadiiCfg::Range { min: 8.0 * h, max: 0.4, count: 24 })
        .values()?;
    let epsilon = mcfg.epsilon.unwrap_or_else(|| default_epsilon(dim));
    let views: Vec<&[f64]> = fields.iter().map(|f| f.as_slice()).collect();
    let profile = monotonicity_profile(&domain, &views, &center, &radii, epsilon)?;
    for note in &profile.skipped {
        log::info!("skipped: {note}");
    }

    ctx.out.csv_with("profile.csv", |w| write_profile_csv(w, &profile))?;
    let dyadic: Vec<Vec<String>> = profile
        .dyadic
        .iter()
        .map(|d| {
            let mut row = vec![d.k.to_string(), d.r.to_string()];
            row.extend((0..3).map(|i| d.a.get(i).map_or_else(String::new, |v| v.to_string())));
            row.extend((0..3).map(|i| d.b.get(i).map_or_else(String::new, |v| v.to_string())));
            row.push(d.delta.to_string());
            row
        })
        .collect();
    let header = ["k", "r", "A_1", "A_2", "A_3", "b_1", "b_2", "b_3", "delta"].map(String::from).to_vec();
    if !profile.dyadic.is_empty() {
        ctx.out.csv("dyadic.csv", &header, &dyadic)?;
    }

    let column = |f: fn(&ProfileRow<f64>) -> Option<f64>| -> Vec<(f64, f64)> {
        profile.rows.iter().filter_map(|r| f(r).map(|v| (r.r, v))).collect()
    };
    let phi2 = column(|r| Some(r.phi2));
    let phi3 = column(|r| r.phi3);
    let phi_ctv = column(|r| r.phi_ctv);
    let series = [
        Series { color: plot::PALETTE[0], points: &phi2 },
        Series { color: plot::PALETTE[1], points: &phi3 },
        Series { color: plot::PALETTE[2], points: &phi_ctv },
    ];
    ctx.out.png("profile.png", &plot::loglog(&series))?;

    let mut report = Report::new();
    report
        .put_list("center", &profile.center)
        .put("epsilon", profile.epsilon)
        .put("fields", fields.len())
        .put("radii", profile.rows.len())
        .put("skipped", profile.skipped.len())
        .put_opt("phi2.spread", profile.spread(|r| Some(r.phi2)))
        .put_opt("phi2.worst_decrease", profile.worst_decrease(|r| Some(r.phi2)))
        .put_opt("phi3.spread", profile.spread(|r| r.phi3))
        .put_opt("phi3.worst_decrease", profile.worst_decrease(|r| r.phi3))
        .put_opt("phi_ctv.spread", profile.spread(|r| r.phi_ctv))
        .put_opt("phi_ctv.worst_decrease", profile.worst_decrease(|r| r.phi_ctv));
    ctx.out.text("report.txt", &report.to_string())?;

    let mut tolerances = Report::new();
    tolerances.put("epsilon", epsilon).put("h", h);
    ctx.finish("monotonicity", &tolerances)
}
