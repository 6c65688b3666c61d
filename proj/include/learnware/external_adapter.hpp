#pragma once

// Models living in another process, spoken to over newline-delimited JSON on
// the child's stdin/stdout:
//
//   request   {"id":<u64>,"x":[[f64,...],...]}\n
//   response  {"id":<u64>,"y":[[f64,...],...]}\n
//
// One request in flight per process. Processes are pooled and restarted after
// any failure.

#include "learnware/codec.hpp"
#include "learnware/predictor.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace learnware {

// Launch descriptor. `env` lists variable names passed through from the
// market's environment (PATH always is); values are never stored here.
struct ExternalDescriptor {
    std::string command;
    std::vector<std::string> args;
    std::vector<std::string> env;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    int timeout_ms = 10000;
    std::size_t pool_size = 1;
    bool deterministic = true;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", command},       {"args", args},
                              {"env", env},               {"input_dim", input_dim},
                              {"output_dim", output_dim}, {"timeout_ms", timeout_ms},
                              {"pool_size", pool_size},   {"deterministic", deterministic}};
    }

    static ExternalDescriptor from_json(const nlohmann::json& j) {
        ExternalDescriptor d;
        d.command = codec::get<std::string>(j, "command");
        d.args = j.value("args", std::vector<std::string>{});
        d.env = j.value("env", std::vector<std::string>{});
        d.input_dim = codec::get<std::size_t>(j, "input_dim");
        d.output_dim = codec::get<std::size_t>(j, "output_dim");
        d.timeout_ms = j.value("timeout_ms", 10000);
        d.pool_size = j.value("pool_size", std::size_t{1});
        d.deterministic = j.value("deterministic", true);
        require(!d.command.empty(), "external model needs a command");
        require(d.input_dim >= 1 && d.output_dim >= 1, "external model dimensions must be positive");
        require(d.timeout_ms > 0 && d.pool_size >= 1, "external model timeout and pool size must be positive");
        for (const auto& name : d.env) {
            require(name.find('=') == std::string::npos, "env allowlist holds variable names, not assignments");
        }
        return d;
    }
};

namespace detail {

class AdapterProcess {
public:
    explicit AdapterProcess(const ExternalDescriptor& d) {
        int sv[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
            throw DeploymentError(std::string("socketpair failed: ") + std::strerror(errno));
        }
        std::vector<std::string> env_entries;
        for (const auto& name : d.env) {
            if (const char* v = std::getenv(name.c_str())) {
                env_entries.push_back(name + "=" + v);
            }
        }
        if (const char* path = std::getenv("PATH")) {
            env_entries.push_back(std::string("PATH=") + path);
        }
        std::vector<char*> argv;
        argv.push_back(const_cast<char*>(d.command.c_str()));
        for (const auto& a : d.args) {
            argv.push_back(const_cast<char*>(a.c_str()));
        }
        argv.push_back(nullptr);
        std::vector<char*> envp;
        for (auto& e : env_entries) {
            envp.push_back(e.data());
        }
        envp.push_back(nullptr);

        pid_ = ::fork();
        if (pid_ < 0) {
            ::close(sv[0]);
            ::close(sv[1]);
            throw DeploymentError(std::string("fork failed: ") + std::strerror(errno));
        }
        if (pid_ == 0) {
            ::dup2(sv[1], STDIN_FILENO);
            ::dup2(sv[1], STDOUT_FILENO);
            ::execvpe(argv[0], argv.data(), envp.data());
            ::_exit(127);
        }
        ::close(sv[1]);
        fd_ = sv[0];
    }

    AdapterProcess(const AdapterProcess&) = delete;
    AdapterProcess& operator=(const AdapterProcess&) = delete;

    ~AdapterProcess() {
        if (fd_ >= 0) {
            ::close(fd_);
        }
        if (pid_ > 0) {
            // closing the socket is the shutdown signal; escalate if it lingers
            for (int i = 0; i < 50; ++i) {
                if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
                    return;
                }
                ::usleep(2000);
            }
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
    }

    std::string round_trip(const std::string& line, int timeout_ms) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
        std::size_t sent = 0;
        while (sent < line.size()) {
            const ssize_t w = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
            if (w < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw DeploymentError(std::string("adapter write failed: ") + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(w);
        }
        for (;;) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string out = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return out;
            }
            const auto left =
                std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                throw DeploymentError("adapter timed out after " + std::to_string(timeout_ms) + " ms");
            }
            pollfd p{fd_, POLLIN, 0};
            const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
            if (rc < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw DeploymentError(std::string("adapter poll failed: ") + std::strerror(errno));
            }
            if (rc == 0) {
                continue;
            }
            char chunk[4096];
            const ssize_t r = ::read(fd_, chunk, sizeof chunk);
            if (r == 0) {
                throw DeploymentError("adapter exited before answering");
            }
            if (r < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw DeploymentError(std::string("adapter read failed: ") + std::strerror(errno));
            }
            buffer_.append(chunk, static_cast<std::size_t>(r));
        }
    }

private:
    pid_t pid_ = -1;
    int fd_ = -1;
    std::string buffer_;
};

} // namespace detail

class ExternalPredictor final : public Predictor {
public:
    explicit ExternalPredictor(ExternalDescriptor d) : desc_(std::move(d)), pool_(std::make_shared<Pool>()) {}

    Matrix predict(const Matrix& x) const override {
        if (x.rows() == 0) {
            return Matrix(0, static_cast<Eigen::Index>(desc_.output_dim));
        }
        require(static_cast<std::size_t>(x.cols()) == desc_.input_dim, "input dimension mismatch");
        std::unique_ptr<detail::AdapterProcess> proc = acquire();
        const std::uint64_t id = next_id();
        const std::string request = nlohmann::json{{"id", id}, {"x", codec::matrix_to_json(x)}}.dump() + "\n";
        Matrix y;
        try {
            const std::string line = proc->round_trip(request, desc_.timeout_ms);
            y = decode_response(line, id, x.rows());
        } catch (...) {
            // the process is in an unknown state: drop it
            proc.reset();
            release(nullptr);
            throw;
        }
        release(std::move(proc));
        return y;
    }

    std::size_t input_dim() const override { return desc_.input_dim; }
    std::size_t output_dim() const override { return desc_.output_dim; }
    ModelArtifact artifact() const override { return ModelArtifact{ModelKind::external, desc_.to_json()}; }
    const ExternalDescriptor& descriptor() const { return desc_; }

private:
    struct Pool {
        std::mutex mutex;
        std::condition_variable cv;
        std::vector<std::unique_ptr<detail::AdapterProcess>> idle;
        std::size_t live = 0;
        std::uint64_t next_id = 1;
    };

    std::uint64_t next_id() const {
        std::lock_guard lock(pool_->mutex);
        return pool_->next_id++;
    }

    std::unique_ptr<detail::AdapterProcess> acquire() const {
        std::unique_lock lock(pool_->mutex);
        pool_->cv.wait(lock, [&] { return !pool_->idle.empty() || pool_->live < desc_.pool_size; });
        if (!pool_->idle.empty()) {
            auto p = std::move(pool_->idle.back());
            pool_->idle.pop_back();
            return p;
        }
        ++pool_->live;
        lock.unlock();
        try {
            return std::make_unique<detail::AdapterProcess>(desc_);
        } catch (...) {
            release(nullptr);
            throw;
        }
    }

    void release(std::unique_ptr<detail::AdapterProcess> p) const {
        {
            std::lock_guard lock(pool_->mutex);
            if (p) {
                pool_->idle.push_back(std::move(p));
            } else {
                --pool_->live;
            }
        }
        pool_->cv.notify_one();
    }

    Matrix decode_response(const std::string& line, std::uint64_t id, Eigen::Index rows) const {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DeploymentError(std::string("adapter sent malformed JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("y") || j["id"] != id) {
            throw DeploymentError("adapter response does not answer request " + std::to_string(id));
        }
        const auto& yj = j["y"];
        if (!yj.is_array() || static_cast<Eigen::Index>(yj.size()) != rows) {
            throw DeploymentError("adapter returned the wrong number of rows");
        }
        Matrix y(rows, yj.empty() || !yj[0].is_array() ? 0 : static_cast<Eigen::Index>(yj[0].size()));
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = yj[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != y.cols()) {
                throw DeploymentError("adapter returned ragged rows");
            }
            for (Eigen::Index c = 0; c < y.cols(); ++c) {
                const auto& v = row[static_cast<std::size_t>(c)];
                // null is how JSON writers spell NaN/inf; keep it non-finite so QA sees it
                y(r, c) = v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
            }
        }
        return y;
    }

    ExternalDescriptor desc_;
    std::shared_ptr<Pool> pool_;
};

} // namespace learnware
