//! JSON-lines host-log ingestion and down-sampling.
//!
//! Raw rows are arbitrary flat-or-nested JSON objects. Down-sampling keeps
//! exactly five content fields per event (event id, process name, base file
//! name, logon type, parent process name) plus the user attribution and a
//! millisecond timestamp. Everything else is dropped before graph
//! construction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Number of content fields a down-sampled record keeps.
pub const FIELD_COUNT: usize = 5;

/// Accepted spellings for each canonical field, matched case-insensitively
/// in precedence order.
const EVENT_ID_ALIASES: &[&str] = &["eventid", "event_id"];
const TIMESTAMP_ALIASES: &[&str] = &["eventtime", "timestamp", "utctime", "event_time", "time"];
const PROCESS_ALIASES: &[&str] = &["processname", "process_name"];
const BASE_FILE_ALIASES: &[&str] = &["basefilename", "base_file_name"];
const LOGON_TYPE_ALIASES: &[&str] = &["logontype", "logon_type"];
const PARENT_ALIASES: &[&str] = &["parentprocessname", "parent_process_name"];

/// One raw input row: flattened key/value pairs plus its 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLog {
    pub fields: BTreeMap<String, String>,
    pub source_line: u64,
}

impl RawLog {
    /// First value whose key matches `name` case-insensitively.
    pub fn get_ci(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    fn get_aliased(&self, aliases: &[&str]) -> Option<&str> {
        aliases.iter().find_map(|a| self.get_ci(a))
    }
}

/// One down-sampled host event. String fields are lowercase, path-stripped,
/// and empty when the source row had no value for them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub user_id: String,
    /// Epoch milliseconds, always positive.
    pub timestamp: i64,
    pub event_id: u32,
    pub process_name: String,
    pub base_file_name: String,
    pub logon_type: String,
    pub parent_process_name: String,
    /// 1-based position in the source stream; plumbing for verdict and label
    /// alignment, never part of record identity.
    pub source_line: u64,
}

impl LogRecord {
    /// Content identity: user plus the five canonical fields, ignoring
    /// `source_line`.
    pub fn same_payload(&self, other: &LogRecord) -> bool {
        self.user_id == other.user_id
            && self.event_id == other.event_id
            && self.process_name == other.process_name
            && self.base_file_name == other.base_file_name
            && self.logon_type == other.logon_type
            && self.parent_process_name == other.parent_process_name
    }
}

/// Parses one JSON-lines row into a flattened raw log.
///
/// Nested objects flatten with dot-joined keys, arrays with dot-joined
/// indices; scalar values are string-coerced. Malformed JSON, non-object
/// rows, and rows that flatten to nothing are parse errors carrying
/// `line_no`.
pub fn parse_line(line: &str, line_no: u64) -> Result<RawLog> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Parse {
        line: line_no,
        reason: "row is not a JSON object".into(),
    })?;
    let mut fields = BTreeMap::new();
    for (k, v) in obj {
        flatten(k, v, &mut fields);
    }
    if fields.is_empty() {
        return Err(Error::Parse { line: line_no, reason: "row has no fields".into() });
    }
    Ok(RawLog { fields, source_line: line_no })
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    use serde_json::Value::*;
    match value {
        Object(m) => {
            for (k, v) in m {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, out);
            }
        }
        String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        Number(n) => {
            out.insert(prefix.to_string(), n.to_string());
        }
        Bool(b) => {
            out.insert(prefix.to_string(), b.to_string());
        }
        Null => {
            out.insert(prefix.to_string(), std::string::String::new());
        }
    }
}

/// Lowercases a value and strips any directory prefix, so
/// `C:\Windows\System32\SVCHOST.EXE` and `svchost.exe` compare equal.
pub fn normalize_name(value: &str) -> String {
    let trimmed = value.trim();
    let tail = trimmed
        .rsplit(|c| c == '\\' || c == '/')
        .next()
        .unwrap_or(trimmed);
    tail.to_lowercase()
}

/// Extracts the user attribution from the configured field (matched
/// case-insensitively). Returns `None` when the field is absent or blank.
pub fn extract_user(raw: &RawLog, user_field: &str) -> Option<String> {
    let v = raw.get_ci(user_field)?.trim();
    if v.is_empty() {
        None
    } else {
        Some(v.to_string())
    }
}

/// Down-samples a raw row to the five canonical fields.
///
/// Returns `None` (skip) when the event id, timestamp, or process name is
/// absent or unparseable; the optional fields default to empty strings.
/// Never invents values: every output field is a normalization of an input
/// value or empty.
pub fn downsample(raw: &RawLog, user_id: &str) -> Option<LogRecord> {
    let event_id: u32 = raw.get_aliased(EVENT_ID_ALIASES)?.trim().parse().ok()?;
    if event_id == 0 {
        return None;
    }
    let timestamp = parse_timestamp_ms(raw.get_aliased(TIMESTAMP_ALIASES)?)?;
    if timestamp <= 0 {
        return None;
    }
    let process_name = normalize_name(raw.get_aliased(PROCESS_ALIASES)?);
    if process_name.is_empty() {
        return None;
    }
    let base_file_name = raw.get_aliased(BASE_FILE_ALIASES).map(normalize_name).unwrap_or_default();
    let logon_type = raw
        .get_aliased(LOGON_TYPE_ALIASES)
        .map(|v| v.trim().to_lowercase())
        .unwrap_or_default();
    let parent_process_name =
        raw.get_aliased(PARENT_ALIASES).map(normalize_name).unwrap_or_default();
    Some(LogRecord {
        user_id: user_id.to_string(),
        timestamp,
        event_id,
        process_name,
        base_file_name,
        logon_type,
        parent_process_name,
        source_line: raw.source_line,
    })
}

/// Integer values are epoch milliseconds; RFC 3339 strings are accepted as a
/// fallback.
fn parse_timestamp_ms(value: &str) -> Option<i64> {
    let v = value.trim();
    if let Ok(ms) = v.parse::<i64>() {
        return Some(ms);
    }
    chrono::DateTime::parse_from_rfc3339(v).ok().map(|dt| dt.timestamp_millis())
}

/// Streaming noise filter: drops denylisted event ids and records whose
/// payload and timestamp both equal the immediately preceding kept record.
#[derive(Debug, Clone)]
pub struct NoiseFilter {
    denylist: Vec<u32>,
    last_kept: Option<LogRecord>,
}

impl NoiseFilter {
    pub fn new(denylist: &[u32]) -> Self {
        let mut denylist = denylist.to_vec();
        denylist.sort_unstable();
        denylist.dedup();
        NoiseFilter { denylist, last_kept: None }
    }

    /// Decides whether `rec` survives; updates internal state when it does.
    pub fn accept(&mut self, rec: &LogRecord) -> bool {
        if self.denylist.binary_search(&rec.event_id).is_ok() {
            return false;
        }
        if let Some(prev) = &self.last_kept {
            if prev.timestamp == rec.timestamp && prev.same_payload(rec) {
                return false;
            }
        }
        self.last_kept = Some(rec.clone());
        true
    }
}

/// Batch form of [`NoiseFilter`]: returns the kept subsequence in order.
pub fn filter_noise(records: Vec<LogRecord>, denylist: &[u32]) -> Vec<LogRecord> {
    let mut filter = NoiseFilter::new(denylist);
    records.into_iter().filter(|r| filter.accept(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(user: &str, ts: i64, event: u32, process: &str, line: u64) -> LogRecord {
        LogRecord {
            user_id: user.into(),
            timestamp: ts,
            event_id: event,
            process_name: process.into(),
            base_file_name: process.into(),
            logon_type: String::new(),
            parent_process_name: String::new(),
            source_line: line,
        }
    }

    #[test]
    fn parses_flat_object() {
        let raw = parse_line(r#"{"EventID":"4624","ProcessName":"winlogon.exe"}"#, 7).unwrap();
        assert_eq!(raw.source_line, 7);
        assert_eq!(raw.get_ci("eventid"), Some("4624"));
    }

    #[test]
    fn flattens_nested_objects_and_arrays() {
        let raw = parse_line(r#"{"a":{"b":"c"},"xs":[1,true,null]}"#, 1).unwrap();
        assert_eq!(raw.fields.get("a.b").map(String::as_str), Some("c"));
        assert_eq!(raw.fields.get("xs.0").map(String::as_str), Some("1"));
        assert_eq!(raw.fields.get("xs.1").map(String::as_str), Some("true"));
        assert_eq!(raw.fields.get("xs.2").map(String::as_str), Some(""));
    }

    #[test]
    fn malformed_and_empty_rows_are_parse_errors_with_line() {
        for (line, input) in [(3u64, "{not json"), (9, "{}"), (11, "42")] {
            match parse_line(input, line) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn number_values_are_string_coerced() {
        let raw = parse_line(
            r#"{"EventID":4688,"EventTime":1723708800123,"ProcessName":"x.exe"}"#,
            1,
        )
        .unwrap();
        let rec = downsample(&raw, "h1").unwrap();
        assert_eq!(rec.event_id, 4688);
        assert_eq!(rec.timestamp, 1723708800123);
    }

    #[test]
    fn field_aliases_match_case_insensitively() {
        let raw = parse_line(
            r#"{"eventid":"4624","EVENTTIME":"1000","processName":"a.exe","LogonType":"3"}"#,
            1,
        )
        .unwrap();
        let rec = downsample(&raw, "h1").unwrap();
        assert_eq!(rec.event_id, 4624);
        assert_eq!(rec.logon_type, "3");
    }

    #[test]
    fn process_names_are_lowercased_and_path_stripped() {
        assert_eq!(normalize_name(r"C:\Windows\System32\SVCHOST.EXE"), "svchost.exe");
        assert_eq!(normalize_name("/usr/bin/Bash"), "bash");
        assert_eq!(normalize_name("  Explorer.EXE "), "explorer.exe");
    }

    #[test]
    fn missing_optional_fields_become_empty() {
        let raw =
            parse_line(r#"{"EventID":"4688","EventTime":"5","ProcessName":"x.exe"}"#, 1).unwrap();
        let rec = downsample(&raw, "h1").unwrap();
        assert_eq!(rec.base_file_name, "");
        assert_eq!(rec.logon_type, "");
        assert_eq!(rec.parent_process_name, "");
    }

    #[test]
    fn missing_mandatory_fields_skip() {
        let cases = [
            r#"{"EventTime":"5","ProcessName":"x.exe"}"#,
            r#"{"EventID":"4688","ProcessName":"x.exe"}"#,
            r#"{"EventID":"4688","EventTime":"5"}"#,
            r#"{"EventID":"nope","EventTime":"5","ProcessName":"x.exe"}"#,
            r#"{"EventID":"4688","EventTime":"-3","ProcessName":"x.exe"}"#,
        ];
        for c in cases {
            let raw = parse_line(c, 1).unwrap();
            assert!(downsample(&raw, "h1").is_none(), "should skip: {c}");
        }
    }

    #[test]
    fn rfc3339_timestamps_parse_to_millis() {
        let raw = parse_line(
            r#"{"EventID":"1","EventTime":"1970-01-01T00:00:01.5Z","ProcessName":"x.exe"}"#,
            1,
        )
        .unwrap();
        assert_eq!(downsample(&raw, "h1").unwrap().timestamp, 1500);
    }

    #[test]
    fn user_extraction_uses_configured_field() {
        let raw = parse_line(r#"{"Hostname":"HOST-7","EventID":"1"}"#, 1).unwrap();
        assert_eq!(extract_user(&raw, "hostname").as_deref(), Some("HOST-7"));
        assert_eq!(extract_user(&raw, "computer"), None);
    }

    #[test]
    fn duplicate_collapse_keeps_one_of_each_adjacent_run() {
        // 700 distinct records, each followed by some of 300 exact duplicates.
        let mut input = Vec::new();
        let mut dupes: usize = 300;
        for i in 0..700u32 {
            let r = rec("h1", 1000, 4624 + (i % 3), &format!("p{i}.exe"), input.len() as u64 + 1);
            input.push(r.clone());
            let run = if dupes > 0 { (i % 2) as usize + if i < 160 { 1 } else { 0 } } else { 0 };
            for _ in 0..run.min(dupes) {
                dupes -= 1;
                input.push(r.clone());
            }
        }
        assert_eq!(dupes, 0, "fixture must place all 300 duplicates");
        assert_eq!(input.len(), 1000);
        let kept = filter_noise(input, &[]);
        assert_eq!(kept.len(), 700);
    }

    #[test]
    fn identical_payload_at_different_timestamp_is_kept() {
        let a = rec("h1", 1000, 4624, "x.exe", 1);
        let mut b = a.clone();
        b.timestamp = 2000;
        assert_eq!(filter_noise(vec![a, b], &[]).len(), 2);
    }

    #[test]
    fn nonadjacent_duplicates_are_kept() {
        let a = rec("h1", 1000, 4624, "x.exe", 1);
        let b = rec("h1", 1000, 4672, "y.exe", 2);
        let kept = filter_noise(vec![a.clone(), b, a], &[]);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn denylisted_event_ids_are_dropped() {
        let input = vec![rec("h1", 1, 4624, "a.exe", 1), rec("h1", 2, 5156, "b.exe", 2)];
        let kept = filter_noise(input, &[5156]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].event_id, 4624);
    }

    proptest! {
        #[test]
        fn filtered_stream_is_a_subsequence(
            events in proptest::collection::vec((1u32..6, 0u8..3, 1i64..4), 0..60),
            deny in proptest::collection::vec(1u32..6, 0..2),
        ) {
            let input: Vec<LogRecord> = events
                .iter()
                .enumerate()
                .map(|(i, (e, p, t))| rec("h1", *t, *e, &format!("p{p}.exe"), i as u64 + 1))
                .collect();
            let kept = filter_noise(input.clone(), &deny);
            // Order-preserving subsequence: source lines strictly increase and
            // every kept record is the unmodified input record.
            let mut last_line = 0;
            for k in &kept {
                prop_assert!(k.source_line > last_line);
                last_line = k.source_line;
                prop_assert_eq!(&input[(k.source_line - 1) as usize], k);
            }
        }

        #[test]
        fn downsample_never_invents_values(
            keys in proptest::collection::vec("[A-Za-z_]{3,12}", 1..6),
            vals in proptest::collection::vec("[ -~]{0,20}", 1..6),
        ) {
            let mut fields = BTreeMap::new();
            fields.insert("EventID".to_string(), "4688".to_string());
            fields.insert("EventTime".to_string(), "1000".to_string());
            fields.insert("ProcessName".to_string(), "X.exe".to_string());
            for (k, v) in keys.iter().zip(vals.iter()) {
                fields.insert(k.clone(), v.clone());
            }
            let raw = RawLog { fields: fields.clone(), source_line: 1 };
            if let Some(rec) = downsample(&raw, "h1") {
                for out in [&rec.process_name, &rec.base_file_name, &rec.logon_type, &rec.parent_process_name] {
                    let ok = out.is_empty()
                        || fields.values().any(|v| normalize_name(v) == *out || v.trim().to_lowercase() == *out);
                    prop_assert!(ok, "field {out:?} not derived from any input value");
                }
            }
        }
    }
}
