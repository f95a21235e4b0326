//! Line protocol with an external translator.
//!
//! The child is started with `sh -c CMD`. For every input it receives one
//! line `x′<TAB>prefix` on stdin and must print exactly one output line on
//! stdout, in order.

use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Write};
use std::process::{Command, Stdio};

use log::debug;

use super::{shard_ranges, PipelineError, SerializedLine};
use crate::tokens::TokenSeq;

fn spawn_error(cmd: &str, e: std::io::Error) -> PipelineError {
    PipelineError::Translator(format!("cannot run {cmd:?}: {e}"))
}

/// Runs one child over `lines` and collects its outputs.
pub fn translate(cmd: &str, lines: &[SerializedLine]) -> Result<Vec<TokenSeq>, PipelineError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| spawn_error(cmd, e))?;
    let stdin = child.stdin.take().expect("stdin is piped");
    let stdout = child.stdout.take().expect("stdout is piped");

    let outputs = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> std::io::Result<()> {
            let mut w = BufWriter::new(stdin);
            for line in lines {
                writeln!(w, "{}\t{}", line.example.encoder_input, line.example.decoder_prefix)?;
            }
            w.flush()
        });

        let mut outputs = Vec::with_capacity(lines.len());
        let mut reader = BufReader::new(stdout);
        let mut buf = String::new();
        while outputs.len() < lines.len() {
            buf.clear();
            match reader.read_line(&mut buf) {
                Ok(0) => break,
                Ok(_) => outputs.push(TokenSeq::from_line(&buf)),
                Err(e) => return Err(PipelineError::Translator(format!("reading output: {e}"))),
            }
        }
        match writer.join().expect("writer thread panicked") {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => {
                return Err(PipelineError::Translator(format!("writing input: {e}")))
            }
            _ => {}
        }
        Ok(outputs)
    })?;

    let status = child
        .wait()
        .map_err(|e| PipelineError::Translator(format!("waiting for {cmd:?}: {e}")))?;
    if !status.success() {
        return Err(PipelineError::Translator(format!("{cmd:?} exited with {status}")));
    }
    if outputs.len() != lines.len() {
        return Err(PipelineError::Translator(format!(
            "{} output lines for {} inputs",
            outputs.len(),
            lines.len()
        )));
    }
    debug!("translator produced {} lines", outputs.len());
    Ok(outputs)
}

/// One child per shard; outputs are concatenated in input order.
pub fn translate_sharded(cmd: &str, lines: &[SerializedLine], shards: usize) -> Result<Vec<TokenSeq>, PipelineError> {
    let ranges = shard_ranges(lines.len(), shards);
    let parts: Vec<Result<Vec<TokenSeq>, PipelineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| scope.spawn(move || translate(cmd, &lines[r])))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("translator worker panicked"))
            .collect()
    });
    let mut outputs = Vec::with_capacity(lines.len());
    for part in parts {
        outputs.extend(part?);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{encode, PipelineConfig};

    fn lines(n: usize) -> Vec<SerializedLine> {
        let sources: Vec<TokenSeq> = (0..n).map(|i| TokenSeq::from_line(&format!("w{i} v"))).collect();
        encode(&PipelineConfig::default(), &sources, &vec![Vec::new(); n]).unwrap()
    }

    #[test]
    fn echo_child_sees_tab_protocol() {
        let input = lines(3);
        let got = translate("cut -f1", &input).unwrap();
        assert_eq!(got[2].to_line(), "<sep> <X_0> <sep> <X_0> w2 v");
        let got = translate("cut -f2", &input).unwrap();
        assert_eq!(got[0].to_line(), "<sep>");
    }

    #[test]
    fn sharded_matches_single() {
        let input = lines(25);
        assert_eq!(translate_sharded("cat", &input, 4).unwrap(), translate("cat", &input).unwrap());
    }

    #[test]
    fn short_output_and_failure_are_errors() {
        let input = lines(3);
        assert!(matches!(translate("head -n 1", &input), Err(PipelineError::Translator(_))));
        assert!(matches!(translate("exit 3", &input), Err(PipelineError::Translator(_))));
    }
}
