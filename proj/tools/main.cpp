#include <cstdlib>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "guidecap/common.hpp"

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.
int main(int argc, char** argv) {
    CLI::App app{"guidecap: guided image captioning on synthetic feature worlds"};
    app.require_subcommand(1);

    gcap::cli::add_synth_command(app);
    gcap::cli::add_stats_command(app);
    gcap::cli::add_train_command(app);
    gcap::cli::add_sweep_command(app);
    gcap::cli::add_decode_command(app);
    gcap::cli::add_eval_command(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const gcap::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const gcap::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const gcap::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
