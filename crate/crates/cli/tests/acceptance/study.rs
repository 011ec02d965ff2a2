//! Drives a real `salbias serve-study` process over HTTP.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use salbias_study::Event;
use serde_json::{json, Value};

use crate::common::{build, Spec};
use crate::{ensure, Outcome};

struct Server {
    child: Child,
    base: String,
    _stdout: BufReader<ChildStdout>,
}

impl Server {
    fn start(manifest: &Path, journal: &Path, per_session: usize, target: usize) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_salbias"))
            .args([
                "serve-study",
                "--study-id",
                "acc",
                "--seed",
                "17",
                "--listen",
                "127.0.0.1:0",
            ])
            .args(["--images-per-session", &per_session.to_string()])
            .args(["--target-reviews", &target.to_string()])
            .arg("--manifest")
            .arg(manifest)
            .arg("--journal")
            .arg(journal)
            .arg("--out")
            .arg(journal.parent().unwrap())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let addr = line
            .strip_prefix("listening on http://")
            .and_then(|l| l.split_whitespace().next())
            .unwrap_or_else(|| panic!("unexpected server banner `{line}`"))
            .to_string();
        Server {
            child,
            base: addr,
            _stdout: stdout,
        }
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into()
}

/// (status, parsed body); transport failures are errors.
fn get(agent: &ureq::Agent, url: &str) -> Result<(u16, Value), String> {
    let mut resp = agent.get(url).call().map_err(|e| e.to_string())?;
    let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    Ok((
        resp.status().as_u16(),
        serde_json::from_str(&body).unwrap_or(Value::Null),
    ))
}

fn post(agent: &ureq::Agent, url: &str, body: &Value) -> Result<(u16, Value), String> {
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body.to_string())
        .map_err(|e| e.to_string())?;
    let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    Ok((
        resp.status().as_u16(),
        serde_json::from_str(&text).unwrap_or(Value::Null),
    ))
}

fn response_body(session: &Value, image: &str, phase: Option<&str>, saliency: bool, manipulation: bool) -> Value {
    let boxes = |on: bool| {
        if on {
            json!([{"x": 2, "y": 2, "w": 6, "h": 6}])
        } else {
            json!([])
        }
    };
    json!({
        "phase": phase,
        "session_id": session["session_id"],
        "image_id": image,
        "participant_id": session["participant_id"],
        "saliency_boxes": boxes(saliency),
        "manipulation_boxes": boxes(manipulation),
        "timestamp": "2024-06-01T09:30:00Z",
    })
}

fn error_kind(body: &Value) -> &str {
    body["error"].as_str().unwrap_or("")
}

/// 25 participants, 5 images, target 5: every image ends at exactly 5.
fn balanced_completion(manifest: &Path, dir: &Path) -> Outcome {
    let server = Server::start(manifest, &dir.join("balance.jsonl"), 1, 5);
    let a = agent();
    let mut violations = 0;
    for p in 0..25 {
        let (status, session) = get(
            &a,
            &format!("http://{}/api/study/acc/session?participant=p{p:02}", server.base),
        )?;
        ensure!(status == 200, "participant {p}: session status {status} {session}");
        let sid = session["session_id"].as_str().unwrap().to_string();
        let image = session["images"][0]["image_id"].as_str().unwrap().to_string();
        let url = format!("http://{}/api/session/{sid}/response", server.base);

        if p % 5 == 0 {
            for bad in [
                response_body(&session, &image, None, false, true),
                response_body(&session, &image, Some("manipulation"), true, true),
            ] {
                let (status, body) = post(&a, &url, &bad)?;
                ensure!(
                    status == 422 && error_kind(&body) == "TaskOrderViolation",
                    "manipulation-first answer got {status} {body}"
                );
                violations += 1;
            }
            let (s1, _) = post(
                &a,
                &url,
                &response_body(&session, &image, Some("saliency"), true, false),
            )?;
            let (s2, ack) = post(
                &a,
                &url,
                &response_body(&session, &image, Some("manipulation"), false, true),
            )?;
            ensure!(
                s1 == 201 && s2 == 201 && ack["stored"] == true,
                "phased answer: {s1} {s2} {ack}"
            );
        } else {
            let (status, ack) = post(&a, &url, &response_body(&session, &image, None, true, p % 2 == 0))?;
            ensure!(status == 201, "participant {p}: {status} {ack}");
        }
        let (status, body) = post(&a, &url, &response_body(&session, &image, None, true, false))?;
        ensure!(
            status == 409 && error_kind(&body) == "DuplicateResponse",
            "resubmission got {status} {body}"
        );
    }
    let (status, body) = get(
        &a,
        &format!("http://{}/api/study/acc/session?participant=late", server.base),
    )?;
    ensure!(
        status == 410 && error_kind(&body) == "StudyExhausted",
        "26th participant got {status} {body}"
    );

    let (_, progress) = get(&a, &format!("http://{}/api/study/acc/progress", server.base))?;
    let counts: Vec<u64> = progress["images"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["completed"].as_u64().unwrap())
        .collect();
    ensure!(counts == [5, 5, 5, 5, 5], "per-image reviews {counts:?}");
    ensure!(
        progress["total_responses"] == 25,
        "total {}",
        progress["total_responses"]
    );
    server.kill();
    Ok(format!(
        "25 sessions, counts {counts:?}, {violations} order violations rejected"
    ))
}

fn stored_in_journal(journal: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(journal)
        .unwrap()
        .lines()
        .filter_map(|l| serde_json::from_str::<Event>(l).ok())
        .filter_map(|e| match e {
            Event::ResponseStored { response } => Some((response.session_id, response.image_id)),
            _ => None,
        })
        .collect()
}

/// Concurrent writers; the server is SIGKILLed mid-stream and restarted.
fn kill_during_write(manifest: &Path, dir: &Path) -> Outcome {
    let journal = dir.join("crash.jsonl");
    let acked: Arc<Mutex<HashSet<(String, String)>>> = Arc::default();
    let mut total_kills = 0;
    for round in 0..3 {
        let server = Server::start(manifest, &journal, 2, 100_000);
        let stop = Arc::new(AtomicBool::new(false));
        let base = server.base.clone();
        let workers: Vec<_> = (0..4)
            .map(|w| {
                let (acked, stop, base) = (acked.clone(), stop.clone(), base.clone());
                std::thread::spawn(move || {
                    let a = agent();
                    let mut n = 0;
                    while !stop.load(Ordering::Relaxed) {
                        n += 1;
                        let url = format!("http://{base}/api/study/acc/session?participant=r{round}w{w}n{n}");
                        let Ok((200, session)) = get(&a, &url) else { return };
                        let sid = session["session_id"].as_str().unwrap().to_string();
                        for img in session["images"].as_array().unwrap() {
                            let image = img["image_id"].as_str().unwrap();
                            let body = response_body(&session, image, None, true, true);
                            match post(&a, &format!("http://{base}/api/session/{sid}/response"), &body) {
                                Ok((201, _)) => {
                                    acked.lock().unwrap().insert((sid.clone(), image.to_string()));
                                }
                                _ => return,
                            }
                        }
                    }
                })
            })
            .collect();
        let start = Instant::now();
        let goal = 40 * (round + 1);
        while acked.lock().unwrap().len() < goal && start.elapsed() < Duration::from_secs(20) {
            std::thread::sleep(Duration::from_millis(2));
        }
        server.kill();
        total_kills += 1;
        stop.store(true, Ordering::Relaxed);
        for w in workers {
            let _ = w.join();
        }
        ensure!(
            acked.lock().unwrap().len() >= goal,
            "round {round}: only {} acks",
            acked.lock().unwrap().len()
        );
    }

    // Restart on the same journal and compare.
    let server = Server::start(manifest, &journal, 2, 100_000);
    let (status, progress) = get(&agent(), &format!("http://{}/api/study/acc/progress", server.base))?;
    ensure!(status == 200, "restarted server progress status {status}");
    let stored = stored_in_journal(&journal);
    let unique: HashSet<_> = stored.iter().cloned().collect();
    ensure!(
        unique.len() == stored.len(),
        "{} duplicate stored responses",
        stored.len() - unique.len()
    );
    let acked = acked.lock().unwrap();
    let lost: Vec<_> = acked.difference(&unique).collect();
    ensure!(
        lost.is_empty(),
        "{} acknowledged responses lost, e.g. {:?}",
        lost.len(),
        lost.first()
    );
    ensure!(
        progress["total_responses"].as_u64() == Some(stored.len() as u64),
        "restart reports {} responses, journal holds {}",
        progress["total_responses"],
        stored.len()
    );
    server.kill();
    Ok(format!(
        "{total_kills} kills, {} acknowledged, {} stored, 0 lost",
        acked.len(),
        stored.len()
    ))
}

pub fn integrity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(
        dir.path(),
        &Spec {
            per_bin: 1,
            ..Spec::default()
        },
    );
    let study_dir = dir.path().join("study");
    std::fs::create_dir_all(&study_dir).unwrap();
    let a = balanced_completion(&fx.manifest, &study_dir)?;
    let b = kill_during_write(&fx.manifest, &study_dir)?;
    Ok(format!("{a}; {b}"))
}
