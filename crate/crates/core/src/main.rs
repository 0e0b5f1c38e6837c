use sparse_interactions::experiments::cli::cli_main;

fn main() {
    std::process::exit(cli_main(std::env::args()));
}
