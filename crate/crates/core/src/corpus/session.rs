use std::collections::{BTreeMap, HashSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::{Click, Session, SessionId, UserClick, UserId};

/// Session construction rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRules {
    /// A gap of at least this many seconds starts a new session.
    pub gap_threshold: i64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SessionRules {
    fn default() -> Self {
        SessionRules {
            gap_threshold: 30 * 60,
            min_len: 2,
            max_len: 20,
        }
    }
}

/// Counts of what the filters removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionizeReport {
    pub sessions: usize,
    pub repeats_removed: usize,
    pub short_discarded: usize,
    pub truncated_sessions: usize,
    pub truncated_clicks: usize,
    /// Splits caused by a removed repeat that had bridged an inactivity gap.
    pub gap_resplits: usize,
}

impl AddAssign for SessionizeReport {
    fn add_assign(&mut self, o: Self) {
        self.sessions += o.sessions;
        self.repeats_removed += o.repeats_removed;
        self.short_discarded += o.short_discarded;
        self.truncated_sessions += o.truncated_sessions;
        self.truncated_clicks += o.truncated_clicks;
        self.gap_resplits += o.gap_resplits;
    }
}

fn split_on_gaps(clicks: Vec<Click>, gap: i64) -> Vec<Vec<Click>> {
    let mut out: Vec<Vec<Click>> = Vec::new();
    for c in clicks {
        match out.last_mut() {
            Some(cur) if c.timestamp - cur.last().map(|l| l.timestamp).unwrap_or(c.timestamp) < gap => {
                cur.push(c)
            }
            _ => out.push(vec![c]),
        }
    }
    out
}

/// Splits one user's time-ordered clicks into sessions.
///
/// Gaps of `gap_threshold` or more split sessions. Repeats of an article
/// within a session are dropped (first occurrence kept); if a dropped
/// repeat was the only activity bridging a gap the remainder is split
/// again. Sessions shorter than `min_len` are discarded and longer ones
/// keep their first `max_len` clicks.
pub fn sessionize(clicks: &[Click], rules: &SessionRules) -> (Vec<Vec<Click>>, SessionizeReport) {
    let mut report = SessionizeReport::default();
    let mut sorted = clicks.to_vec();
    sorted.sort_by_key(|c| c.timestamp);
    let mut out = Vec::new();
    for raw in split_on_gaps(sorted, rules.gap_threshold) {
        let mut seen = HashSet::new();
        let before = raw.len();
        let dedup: Vec<Click> = raw.into_iter().filter(|c| seen.insert(c.article)).collect();
        report.repeats_removed += before - dedup.len();
        let pieces = split_on_gaps(dedup, rules.gap_threshold);
        report.gap_resplits += pieces.len() - 1;
        for mut s in pieces {
            if s.len() < rules.min_len {
                report.short_discarded += 1;
                continue;
            }
            if s.len() > rules.max_len {
                report.truncated_sessions += 1;
                report.truncated_clicks += s.len() - rules.max_len;
                s.truncate(rules.max_len);
            }
            out.push(s);
        }
    }
    out.sort_by_key(|s| s[0].timestamp);
    report.sessions = out.len();
    (out, report)
}

/// Groups parsed clicks by user, sessionizes each user and returns all
/// sessions ordered by start time with sequential ids.
pub fn build_sessions(
    clicks: &[UserClick],
    rules: &SessionRules,
) -> (Vec<Session>, SessionizeReport) {
    let mut by_user: BTreeMap<&str, Vec<Click>> = BTreeMap::new();
    for uc in clicks {
        by_user.entry(uc.user.as_str()).or_default().push(uc.click.clone());
    }
    let mut report = SessionizeReport::default();
    let mut sessions = Vec::new();
    for (uid, (_, user_clicks)) in by_user.into_iter().enumerate() {
        let (s, r) = sessionize(&user_clicks, rules);
        report += r;
        sessions.extend(s.into_iter().map(|clicks| Session {
            id: SessionId(0),
            user: UserId(uid as u32),
            clicks,
        }));
    }
    sessions.sort_by(|a, b| {
        a.start_time()
            .cmp(&b.start_time())
            .then(a.user.cmp(&b.user))
    });
    for (i, s) in sessions.iter_mut().enumerate() {
        s.id = SessionId(i as u32);
    }
    (sessions, report)
}
