use std::io::{self, Write};

use super::{TargetIndex, TargetSet};
use crate::scalar::Scalar;
use crate::stats::fmt17;

/// Write target sets as CSV, one row per record.
///
/// Episodic sets use the columns `episode,t,i,target,mode`; average-cost
/// sets use `episode,k,target,mode`. The header follows the first record.
pub fn write_targets_csv<W: Write, T: Scalar>(mut out: W, episodes: &[TargetSet<T>]) -> io::Result<()> {
    let episodic = episodes
        .iter()
        .flat_map(|s| s.records.first())
        .next()
        .is_none_or(|r| matches!(r.index, TargetIndex::Epoch { .. }));
    if episodic {
        writeln!(out, "episode,t,i,target,mode")?;
    } else {
        writeln!(out, "episode,k,target,mode")?;
    }
    for (e, set) in episodes.iter().enumerate() {
        let mode = set.mode.label();
        for r in &set.records {
            let v = fmt17(r.target.as_f64());
            match r.index {
                TargetIndex::Epoch { t, i } => writeln!(out, "{e},{t},{i},{v},{mode}")?,
                TargetIndex::Step(k) => writeln!(out, "{e},{k},{v},{mode}")?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{EstimatorMode, TargetRecord};

    #[test]
    fn csv_layout() {
        let set = TargetSet {
            mode: EstimatorMode::AmpSampled { samples: 5 },
            records: vec![TargetRecord { index: TargetIndex::Step(0), target: 1.5f64 }],
        };
        let mut buf = Vec::new();
        write_targets_csv(&mut buf, &[set]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "episode,k,target,mode\n0,0,1.5000000000000000e0,amp_sampled_L5\n");
    }
}
