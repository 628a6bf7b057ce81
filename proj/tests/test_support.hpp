#pragma once

// Shared helpers for the test suites: fixture paths, a subprocess
// runner for CLI tests, and a central-difference gradient checker.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "vulgnn/tape.hpp"
#include "vulgnn/tensor.hpp"

namespace testutil {

inline std::string fixture_path(const std::string& rel) {
    return (std::filesystem::path(VULGNN_FIXTURE_DIR) / rel).string();
}

inline std::string cli_path() { return VULGNN_CLI_PATH; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CommandResult {
    int exit_code = -1;
    std::string output; // stdout and stderr interleaved
};

// Runs a command through the shell, merging stderr into stdout.
inline CommandResult run_command(const std::string& command) {
    CommandResult result;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (pipe == nullptr) {
        return result;
    }
    std::array<char, 4096> buf;
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) {
        result.output += buf.data();
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// Compares tape gradients of a scalar-valued function against central
// differences. fn receives a fresh tape plus leaf IDs for the inputs
// (in order) and must return a scalar ValueId. Relative error uses a
// small floor so near-zero gradients compare absolutely.
template <typename Fn>
double gradcheck_max_rel_err(const std::vector<vulgnn::Tensor<double>>& inputs, Fn fn,
                             double eps = 1e-5) {
    using vulgnn::Tape;
    using vulgnn::Tensor;
    using vulgnn::ValueId;

    auto eval = [&](const std::vector<Tensor<double>>& points) {
        Tape<double> tape;
        std::vector<ValueId> ids;
        ids.reserve(points.size());
        for (const Tensor<double>& t : points) {
            ids.push_back(tape.leaf(t, false));
        }
        return tape.value(fn(tape, ids)).item();
    };

    Tape<double> tape;
    std::vector<ValueId> ids;
    ids.reserve(inputs.size());
    for (const Tensor<double>& t : inputs) {
        ids.push_back(tape.leaf(t, true));
    }
    tape.backward(fn(tape, ids));

    double max_err = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<double> analytic = tape.grad(ids[i]);
        for (std::size_t k = 0; k < inputs[i].size(); ++k) {
            std::vector<Tensor<double>> shifted = inputs;
            shifted[i].data[k] += eps;
            const double up = eval(shifted);
            shifted[i].data[k] -= 2.0 * eps;
            const double down = eval(shifted);
            const double numeric = (up - down) / (2.0 * eps);
            const double denom =
                std::max({std::abs(numeric), std::abs(analytic.data[k]), 1e-6});
            max_err = std::max(max_err, std::abs(numeric - analytic.data[k]) / denom);
        }
    }
    return max_err;
}

} // namespace testutil
