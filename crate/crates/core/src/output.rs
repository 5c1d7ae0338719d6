//! CSV writers for trajectories and sojourn logs.
//!
//! Column order is part of the format and does not change:
//!
//! * `trajectory.csv`: `t, swarm, population, nu_min, nu_max, mbar, M, P, V1, V2, V3`
//! * `sojourns.csv`: `swarm, arrival, departure`
//!
//! `V1..V3` are written as `NaN` when the Lyapunov constants are unavailable.

use std::io::Write;

use crate::lyapunov::{swarm_components, LyapunovConfig};
use crate::record::TrajectoryRecord;
use crate::scalar::Scalar;

pub const TRAJECTORY_COLUMNS: [&str; 11] = ["t", "swarm", "population", "nu_min", "nu_max", "mbar", "M", "P", "V1", "V2", "V3"];
pub const SOJOURN_COLUMNS: [&str; 3] = ["swarm", "arrival", "departure"];

pub fn write_trajectory_csv<T: Scalar, W: Write>(
    record: &TrajectoryRecord<T>,
    cfg: Option<&LyapunovConfig<T>>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for s in &record.samples {
        for (i, sw) in s.swarms.iter().enumerate() {
            let v = match cfg {
                Some(c) => swarm_components(sw, c, i).map(|x| x.as_f64()),
                None => [f64::NAN; 3],
            };
            w.write_record([
                s.t.to_string(),
                record.swarm_ids[i].clone(),
                sw.population.to_string(),
                sw.nu_min.to_string(),
                sw.nu_max.to_string(),
                sw.mbar.to_string(),
                sw.total_mismatch.to_string(),
                sw.total.to_string(),
                v[0].to_string(),
                v[1].to_string(),
                v[2].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sojourns_csv<T: Scalar, W: Write>(record: &TrajectoryRecord<T>, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SOJOURN_COLUMNS)?;
    for s in &record.sojourns {
        w.write_record([record.swarm_ids[s.swarm.0].clone(), s.arrival.to_string(), s.departure.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
