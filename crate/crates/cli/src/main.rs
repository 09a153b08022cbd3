use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "lakee", version, about = "Three-message authenticated key exchange over CoAP/UDP")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Each also reads `LAKEE_<NAME>` and
/// the matching key of the config file.
#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// TOML file supplying defaults for the options below.
    #[arg(long, global = true, env = "LAKEE_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Curve profile: toy, ed448 or a profile file [default: ed448].
    #[arg(long, global = true, env = "LAKEE_PROFILE")]
    pub profile: Option<String>,
    /// Seed for all randomness.
    #[arg(long, global = true, env = "LAKEE_SEED")]
    pub seed: Option<u64>,
    /// Timestamp freshness window [default: 30].
    #[arg(long = "delta-t", global = true, env = "LAKEE_DELTA_T", value_name = "SECONDS")]
    pub delta_t: Option<u64>,
    /// Rotate the long-term key on every handshake.
    #[arg(
        long,
        global = true,
        env = "LAKEE_ROTATE",
        num_args = 0..=1,
        require_equals = true,
        default_missing_value = "true",
        value_name = "BOOL"
    )]
    pub rotate: Option<bool>,
    /// Keystore file: one `<client id hex> <key hex>` per line.
    #[arg(long, global = true, env = "LAKEE_KEYSTORE", value_name = "PATH")]
    pub keystore: Option<PathBuf>,
    /// Server bind address [default: 0.0.0.0:5683].
    #[arg(long, global = true, env = "LAKEE_LISTEN", value_name = "ADDR:PORT")]
    pub listen: Option<SocketAddr>,
    /// Nominal point width for the size model [default: the profile's].
    #[arg(long = "point-bits", global = true, env = "LAKEE_POINT_BITS", value_name = "N")]
    pub point_bits: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Serve handshakes over UDP until killed.
    Serve {
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Exit after this many established sessions.
        #[arg(long, value_name = "N")]
        max_sessions: Option<usize>,
    },
    /// Run one client handshake, in process or against a server.
    Handshake {
        /// Server to contact; without it both sides run in process.
        #[arg(long, value_name = "ADDR:PORT")]
        server: Option<SocketAddr>,
        /// Client id (hex) whose key is read from the keystore.
        #[arg(long, value_name = "HEX")]
        client_id: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run attack scripts, the invalid-curve probe or a mutation sweep.
    Attack {
        /// Built-in script name, a prefix naming a group (e.g. `replay`),
        /// `all`, or a script file.
        #[arg(long, value_name = "NAME|PATH")]
        script: Option<String>,
        /// List the built-in scripts.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        probe: bool,
        #[arg(long, value_name = "TRIALS")]
        sweep: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Measure one honest handshake and print the comparison tables.
    Bench {
        #[arg(long)]
        json: bool,
        /// Also print wall-clock time (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Print the nominal message-size table.
    Sizes {
        #[arg(long)]
        json: bool,
    },
    /// Add a client with a fresh random key to the keystore.
    Keygen {
        #[arg(long, value_name = "HEX")]
        client_id: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad options or configuration; exit code 2.
    Usage(String),
    /// The requested operation ran and failed; exit code 1.
    Failed(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::Settings::resolve(&cli.global).and_then(|settings| match cli.command {
        Command::Serve { workers, max_sessions } => commands::serve(&settings, workers, max_sessions),
        Command::Handshake {
            server,
            client_id,
            json,
        } => match server {
            Some(server) => commands::handshake_udp(&settings, server, client_id.as_deref()),
            None => commands::handshake_sim(&settings, json),
        },
        Command::Attack {
            script,
            list,
            probe,
            sweep,
            json,
        } => commands::attack(&settings, script.as_deref(), list, probe, sweep, json),
        Command::Bench { json, timing } => commands::bench(&settings, json, timing),
        Command::Sizes { json } => commands::sizes(&settings, json),
        Command::Keygen { client_id } => commands::keygen(&settings, &client_id),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
