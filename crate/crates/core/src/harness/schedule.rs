//! Hour bucketing and the train/evaluate plan.

use std::ops::RangeInclusive;

use log::warn;

use super::HarnessError;
use crate::corpus::Session;

pub const HOUR: i64 = 3600;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HourBucket {
    /// 0-based hour since the dataset's first full hour.
    pub index: usize,
    /// Indices into the session slice, by start time.
    pub sessions: Vec<usize>,
}

/// Groups sessions by the hour of their first click. Returns the start of
/// hour 0 and one bucket per hour, empty hours included.
pub fn bucket_sessions(sessions: &[Session]) -> (i64, Vec<HourBucket>) {
    let Some(first) = sessions.iter().map(Session::start_time).min() else {
        return (0, Vec::new());
    };
    let t0 = first.div_euclid(HOUR) * HOUR;
    let mut order: Vec<usize> = (0..sessions.len()).collect();
    order.sort_by_key(|&i| (sessions[i].start_time(), i));
    let mut buckets: Vec<HourBucket> = Vec::new();
    for i in order {
        let h = ((sessions[i].start_time() - t0) / HOUR) as usize;
        while buckets.len() <= h {
            buckets.push(HourBucket { index: buckets.len(), sessions: Vec::new() });
        }
        buckets[h].sessions.push(i);
    }
    (t0, buckets)
}

/// One cycle of the plan, in 1-based hours. `train` lists the hours first
/// fed to training in this cycle; every evaluated hour is trained on later.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleStep {
    pub train: RangeInclusive<usize>,
    pub eval: usize,
}

impl ScheduleStep {
    pub fn eval_index(&self) -> usize {
        self.eval - 1
    }
}

/// Train on `stride` hours, evaluate on the next, repeat after `warmup`.
pub fn schedule(n_hours: usize, warmup: usize, stride: usize) -> Result<Vec<ScheduleStep>, HarnessError> {
    if stride == 0 {
        return Err(HarnessError::Schedule("eval_stride must be positive".into()));
    }
    if n_hours < stride + 1 {
        return Err(HarnessError::Schedule(format!(
            "{n_hours} hours cannot hold one {stride}+1 train/eval cycle"
        )));
    }
    let mut plan = Vec::new();
    let mut next_train = 1;
    let mut eval = warmup + stride + 1;
    while eval <= n_hours {
        plan.push(ScheduleStep { train: next_train..=eval - 1, eval });
        next_train = eval + 1;
        eval += stride + 1;
    }
    if plan.is_empty() {
        warn!("warm-up of {warmup} hours leaves no evaluation hour in {n_hours} hours");
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Click, SessionId, UserContext, UserId};

    #[test]
    fn five_plus_one() {
        let plan = schedule(16, 0, 5).unwrap();
        assert_eq!(
            plan,
            vec![ScheduleStep { train: 1..=5, eval: 6 }, ScheduleStep { train: 7..=11, eval: 12 }]
        );
        assert_eq!(plan, schedule(16, 0, 5).unwrap());
        let warm = schedule(100, 48, 5).unwrap();
        assert_eq!(warm[0], ScheduleStep { train: 1..=53, eval: 54 });
        assert_eq!(warm.last().unwrap().eval, 96);
    }

    #[test]
    fn short_data() {
        assert!(schedule(50, 48, 5).unwrap().is_empty());
        assert!(schedule(5, 0, 5).is_err());
    }

    #[test]
    fn buckets_by_start_hour() {
        let mk = |id, ts: i64| Session {
            id: SessionId(id),
            user: UserId(0),
            clicks: vec![
                Click { article: crate::corpus::ArticleId(0), timestamp: ts, context: UserContext::at(ts, 0) },
                Click { article: crate::corpus::ArticleId(1), timestamp: ts + 4000, context: UserContext::at(ts, 0) },
            ],
        };
        let s = vec![mk(0, 7300), mk(1, 3700), mk(2, 14_399), mk(3, 3600)];
        let (t0, b) = bucket_sessions(&s);
        assert_eq!(t0, 3600);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].sessions, vec![3, 1]);
        assert_eq!(b[1].sessions, vec![0]);
        assert_eq!(b[2].sessions, vec![2]);
    }
}
