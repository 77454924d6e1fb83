use std::io::BufRead;

use serde::Deserialize;

use super::{Catalog, Click, ContextVocabs, CorpusError, UserContext};

#[derive(Debug, Deserialize)]
struct ClickRecord {
    ts: i64,
    user: String,
    article: String,
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    region: Option<String>,
    #[serde(default)]
    city: Option<String>,
    #[serde(default)]
    device: Option<String>,
    #[serde(default)]
    os: Option<String>,
    #[serde(default)]
    platform: Option<String>,
    #[serde(default)]
    referrer: Option<String>,
    /// Seconds east of UTC used for the hour-of-day features.
    #[serde(default)]
    tz_offset: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct ArticleRecord {
    id: String,
    published_ts: i64,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    keywords: Option<String>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserClick {
    pub user: String,
    pub click: Click,
}

fn records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), CorpusError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(CorpusError::Io(e))),
    })
}

fn field(vocab: &mut super::Vocab, value: Option<&String>) -> u32 {
    match value {
        Some(v) if !v.is_empty() => vocab.intern(v),
        _ => super::Vocab::UNK,
    }
}

/// Parses a newline-delimited JSON click log.
///
/// Output is sorted by `(user, timestamp)`; out-of-order records within a
/// user are re-sorted. Articles missing from `catalog` are added as
/// placeholders without content.
pub fn parse_click_log<R: BufRead>(
    reader: R,
    catalog: &mut Catalog,
    vocabs: &mut ContextVocabs,
) -> Result<Vec<UserClick>, CorpusError> {
    let mut out = Vec::new();
    for rec in records(reader) {
        let (line, text) = rec?;
        let r: ClickRecord = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        if r.user.is_empty() || r.article.is_empty() {
            return Err(CorpusError::Parse {
                line,
                message: "empty user or article".into(),
            });
        }
        let article = catalog.intern(&r.article, r.ts);
        let mut context = UserContext::at(r.ts, r.tz_offset.unwrap_or(0));
        context.country = field(&mut vocabs.country, r.country.as_ref());
        context.region = field(&mut vocabs.region, r.region.as_ref());
        context.city = field(&mut vocabs.city, r.city.as_ref());
        context.device = field(&mut vocabs.device, r.device.as_ref());
        context.os = field(&mut vocabs.os, r.os.as_ref());
        context.platform = field(&mut vocabs.platform, r.platform.as_ref());
        context.referrer = field(&mut vocabs.referrer, r.referrer.as_ref());
        out.push(UserClick {
            user: r.user,
            click: Click {
                article,
                timestamp: r.ts,
                context,
            },
        });
    }
    out.sort_by(|a, b| {
        a.user
            .cmp(&b.user)
            .then(a.click.timestamp.cmp(&b.click.timestamp))
    });
    Ok(out)
}

/// Parses a newline-delimited JSON article catalog into `catalog`.
/// Text is split on whitespace; keywords on commas.
pub fn parse_catalog<R: BufRead>(reader: R, catalog: &mut Catalog) -> Result<usize, CorpusError> {
    let mut n = 0;
    for rec in records(reader) {
        let (line, text) = rec?;
        let r: ArticleRecord = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        if r.id.is_empty() {
            return Err(CorpusError::Parse {
                line,
                message: "empty article id".into(),
            });
        }
        let tokens = r
            .text
            .as_deref()
            .unwrap_or("")
            .split_whitespace()
            .map(|w| catalog.words.intern(w))
            .collect();
        let category = r
            .category
            .as_deref()
            .filter(|c| !c.is_empty())
            .map(|c| catalog.categories.intern(c));
        let keywords = r
            .keywords
            .as_deref()
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(|k| catalog.keywords.intern(k))
            .collect();
        catalog.upsert(&r.id, r.published_ts, tokens, category, keywords);
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;

    fn parse(text: &str) -> Result<Vec<UserClick>, CorpusError> {
        let mut cat = Catalog::new();
        let mut voc = ContextVocabs::new();
        parse_click_log(text.as_bytes(), &mut cat, &mut voc)
    }

    #[test]
    fn missing_city_maps_to_unk() {
        let out = parse(r#"{"ts": 100, "user": "u", "article": "a", "region": "SP"}"#).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].click.context.city, Vocab::UNK);
        assert_ne!(out[0].click.context.region, Vocab::UNK);
    }

    #[test]
    fn noon_utc_hour_features() {
        let out = parse(r#"{"ts": 1538654400, "user": "u", "article": "a"}"#).unwrap();
        let ctx = out[0].click.context;
        assert!(ctx.hour_sin.abs() < 1e-12);
        assert!((ctx.hour_cos + 1.0).abs() < 1e-12);
    }

    #[test]
    fn timezone_offset_shifts_hour() {
        let out = parse(r#"{"ts": 1538654400, "user": "u", "article": "a", "tz_offset": 21600}"#)
            .unwrap();
        // 12:00 UTC + 6h = 18:00 local
        assert!((out[0].click.context.hour_sin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = parse("{\"ts\": 1, \"user\": \"u\", \"article\": \"a\"}\n{\"ts\": \"x\"}\n")
            .unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resorts_within_user() {
        let log = r#"{"ts": 300, "user": "b", "article": "x"}
{"ts": 200, "user": "a", "article": "y"}
{"ts": 100, "user": "a", "article": "z"}"#;
        let out = parse(log).unwrap();
        let order: Vec<(&str, i64)> = out
            .iter()
            .map(|u| (u.user.as_str(), u.click.timestamp))
            .collect();
        assert_eq!(order, vec![("a", 100), ("a", 200), ("b", 300)]);
    }

    #[test]
    fn catalog_records() {
        let mut cat = Catalog::new();
        let text = r#"{"id": "n1", "published_ts": 10, "category": "sports", "keywords": "a, b", "text": "the cup final"}
{"id": "n2", "published_ts": 20, "text": "no category"}"#;
        assert_eq!(parse_catalog(text.as_bytes(), &mut cat).unwrap(), 2);
        let n1 = cat.get(cat.lookup("n1").unwrap()).unwrap();
        assert_eq!(n1.tokens.len(), 3);
        assert_eq!(n1.keywords.len(), 2);
        assert!(n1.category.is_some());
        assert!(cat.get(cat.lookup("n2").unwrap()).unwrap().category.is_none());
    }
}
