use std::fs::File;
use std::io::{BufRead, BufReader, IsTerminal, Write};

use mrta_service::{
    logical_clocks, system_clocks, CreateSession, Event, EventKind, Service, ServiceConfig,
    ServiceError,
};
use serde_json::Value;

use crate::args::ChatArgs;
use crate::error::{CliError, Context};
use crate::settings::{pick, require, FileConfig};
use crate::{load_backend, load_manuals, write_line, DEFAULT_CHUNK_SIZE};

const HELP: &str = "commands: /done N, /undone N, /quit";

fn render(event: &Event) -> Option<String> {
    let p = &event.payload;
    let text = |key: &str| p[key].as_str().unwrap_or_default().to_string();
    match event.kind {
        EventKind::TrainerMessage => Some(format!("Trainer: {}", text("text"))),
        EventKind::ToolCall => {
            let args = match &p["args"] {
                Value::Object(m) if m.is_empty() => String::new(),
                other => format!(" {other}"),
            };
            Some(format!("  [tool] {}{args}", text("name")))
        }
        EventKind::ToolResponse | EventKind::VlmResult => {
            let r = &p["response"];
            let status = if r["ok"].as_bool() == Some(true) {
                "ok".to_string()
            } else {
                r["error_code"].as_str().unwrap_or("error").to_string()
            };
            Some(format!(
                "  [{status}] {}",
                r["message"].as_str().unwrap_or_default()
            ))
        }
        EventKind::Error => Some(format!("  ! {}: {}", text("code"), text("message"))),
        EventKind::State | EventKind::TraineeMessage => None,
    }
}

fn print_event(out: &mut dyn Write, event: &Event) -> std::io::Result<()> {
    match render(event) {
        Some(line) => writeln!(out, "{line}"),
        None => Ok(()),
    }
}

fn service_err(e: ServiceError) -> CliError {
    match e {
        ServiceError::BackendConfig(b) => CliError::backend(b),
        ServiceError::UnknownManual(_) | ServiceError::UnknownChunk { .. } => CliError::usage(e),
        other => CliError::data(other),
    }
}

pub(crate) fn run(
    args: &ChatArgs,
    file: &FileConfig,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let manuals = load_manuals(&require(pick(&args.manuals, &file.manuals), "manuals")?)?;
    let backend = load_backend(&require(pick(&args.backend, &file.backend), "backend")?)?;
    let clocks = if args.logical_clock {
        logical_clocks(1)
    } else {
        system_clocks()
    };
    let mut config = ServiceConfig::new(manuals)
        .with_chunk_size(pick(&args.chunk_size, &file.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE))
        .with_clocks(clocks);
    if let Some(dir) = pick(&args.log_dir, &file.log_dir) {
        config = config.with_log_dir(dir);
    }
    let service = Service::new(config).map_err(service_err)?;
    let handle = service
        .create_session(CreateSession {
            manual_id: args.manual.clone(),
            chunk_index: args.chunk,
            backend: Some(backend),
        })
        .map_err(service_err)?;
    let id = handle.meta.session_id.clone();

    let mut last = 0;
    for event in handle.events_since(0) {
        print_event(out, &event).data_err("writing output")?;
        last = event.seq;
    }

    let mut script;
    let (input, echo): (&mut dyn BufRead, bool) = match &args.script {
        Some(path) => {
            script =
                BufReader::new(File::open(path).data_err(format!("opening {}", path.display()))?);
            (&mut script, true)
        }
        None => (stdin, !std::io::stdin().is_terminal()),
    };
    let interactive = !echo;
    if interactive {
        write_line(out, HELP)?;
    }
    let mut line = String::new();
    loop {
        if interactive {
            write!(out, "> ")
                .and_then(|_| out.flush())
                .data_err("writing output")?;
        }
        line.clear();
        if input.read_line(&mut line).data_err("reading input")? == 0 {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if echo {
            write_line(out, format!("Trainee: {text}"))?;
        }
        let mut words = text.split_whitespace();
        match words.next() {
            Some("/quit") => break,
            Some(cmd @ ("/done" | "/undone")) => {
                let Some(step) = words.next().and_then(|w| w.parse::<i64>().ok()) else {
                    write_line(out, format!("  usage: {cmd} N"))?;
                    continue;
                };
                match handle.control_step_blocking(step, cmd == "/done") {
                    Ok(event) => {
                        last = last.max(event.seq);
                        let view = &event.payload;
                        write_line(
                            out,
                            format!(
                                "  [step {step} {}] completed {} / remaining {}",
                                if cmd == "/done" { "done" } else { "not done" },
                                view["completed_steps"],
                                view["remaining_steps"]
                            ),
                        )?;
                    }
                    Err(e) => write_line(out, format!("  ! {e}"))?,
                }
            }
            Some(cmd) if cmd.starts_with('/') => write_line(out, format!("  {HELP}"))?,
            _ => match service.post_message(&id, text) {
                Ok(_) => {
                    let mut io = Ok(());
                    last = handle
                        .follow_turn_blocking(last, |event| {
                            if io.is_ok() {
                                io = print_event(out, event);
                            }
                        })
                        .map_err(service_err)?;
                    io.data_err("writing output")?;
                    if handle.view().state.finished {
                        write_line(out, "  [session finished]")?;
                    }
                }
                Err(e @ ServiceError::SessionFinished(_)) => write_line(out, format!("  ! {e}"))?,
                Err(e) => return Err(service_err(e)),
            },
        }
    }
    Ok(())
}
