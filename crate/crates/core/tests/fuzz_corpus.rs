//! Replays the checked-in fuzz corpus through the fuzz targets' properties.

use std::fs;
use std::path::PathBuf;

use qpmix::config::parse_config;
use qpmix::env::TraceRecord;
use qpmix::nn::Checkpoint;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {target}");
    files.into_iter().map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())).collect()
}

#[test]
fn config_corpus_round_trips() {
    let mut parsed = 0;
    for (name, data) in corpus("parse_config") {
        let text = String::from_utf8(data).unwrap();
        match parse_config(&text) {
            Ok(spec) => {
                parsed += 1;
                assert_eq!(parse_config(&spec.to_toml().unwrap()).unwrap(), spec, "{name}");
            }
            Err(e) => assert_eq!(name, "unknown_key", "{e}"),
        }
    }
    assert!(parsed >= 8);
}

#[test]
fn checkpoint_corpus_round_trips() {
    for (name, data) in corpus("checkpoint_decode") {
        match Checkpoint::decode(&data) {
            Ok(ck) => assert_eq!(ck.encode(), data, "{name}"),
            Err(_) => assert!(name == "bad_magic" || name == "truncated", "{name} should decode"),
        }
    }
}

#[test]
fn trace_corpus_round_trips() {
    let mut ok = 0;
    for (_, data) in corpus("trace_parse") {
        for line in String::from_utf8(data).unwrap().lines() {
            if let Ok(rec) = TraceRecord::parse_line(line) {
                ok += 1;
                assert_eq!(TraceRecord::parse_line(&rec.to_line()).unwrap(), rec);
            }
        }
    }
    assert_eq!(ok, 4);
}
