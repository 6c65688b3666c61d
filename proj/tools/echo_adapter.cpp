// Stdio adapter used by the tests: answers each request with y = scale * x.
//
//   --crash-after N   exit without answering request N+1
//   --nan             answer with NaN (written as null)
//   --hang            never answer
//   --extra-column    append a column of zeros to every row
//   --noisy           add a per-request offset (nondeterministic output)
//   --scale S         multiply inputs by S
//   --sum             answer with the row sum (one output column)

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <string>
#include <thread>

int main(int argc, char** argv) {
    long crash_after = -1;
    bool nan = false;
    bool hang = false;
    bool extra = false;
    bool noisy = false;
    bool sum = false;
    double scale = 1.0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--crash-after" && i + 1 < argc) {
            crash_after = std::strtol(argv[++i], nullptr, 10);
        } else if (a == "--nan") {
            nan = true;
        } else if (a == "--hang") {
            hang = true;
        } else if (a == "--extra-column") {
            extra = true;
        } else if (a == "--noisy") {
            noisy = true;
        } else if (a == "--sum") {
            sum = true;
        } else if (a == "--scale" && i + 1 < argc) {
            scale = std::strtod(argv[++i], nullptr);
        }
    }

    long served = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
        if (crash_after >= 0 && served >= crash_after) {
            return 3;
        }
        if (hang) {
            std::this_thread::sleep_for(std::chrono::hours(1));
        }
        const auto req = nlohmann::json::parse(line);
        nlohmann::json y = nlohmann::json::array();
        for (const auto& row : req.at("x")) {
            nlohmann::json out = nlohmann::json::array();
            double total = 0.0;
            for (const auto& v : row) {
                total += v.get<double>();
                if (!sum) {
                    out.push_back(nan ? std::numeric_limits<double>::quiet_NaN()
                                      : scale * v.get<double>() + (noisy ? 1e-3 * static_cast<double>(served) : 0.0));
                }
            }
            if (sum) {
                out.push_back(nan ? std::numeric_limits<double>::quiet_NaN() : scale * total);
            }
            if (extra) {
                out.push_back(0.0);
            }
            y.push_back(std::move(out));
        }
        std::cout << nlohmann::json{{"id", req.at("id")}, {"y", y}}.dump() << '\n' << std::flush;
        ++served;
    }
    return 0;
}
