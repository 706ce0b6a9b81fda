#include "imdyn/denoiser_wire.hpp"

#include <bit>
#include <cerrno>
#include <cstring>

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace imdyn {
namespace {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

constexpr std::uint32_t kMaxFrame = 1u << 30;

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + 4);
}

std::int32_t get_i32(std::span<const std::uint8_t> in, std::size_t& off) {
    if (off + 4 > in.size()) throw IoError("denoiser message truncated");
    std::int32_t v;
    std::memcpy(&v, in.data() + off, 4);
    off += 4;
    return v;
}

void put_latent(std::vector<std::uint8_t>& out, const LatentVideo& z) {
    for (int d : z.shape()) put_i32(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(z.values().data());
    out.insert(out.end(), p, p + z.size() * sizeof(float));
}

LatentVideo get_latent(std::span<const std::uint8_t> in, std::size_t& off) {
    LatentVideo::Shape shape{};
    std::size_t n = 1;
    for (auto& d : shape) {
        d = get_i32(in, off);
        if (d < 0) throw IoError("denoiser message has a negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    if (in.size() - off != n * sizeof(float)) throw IoError("denoiser payload size does not match its shape");
    std::vector<float> values(n);
    std::memcpy(values.data(), in.data() + off, n * sizeof(float));
    off += n * sizeof(float);
    return LatentVideo(shape, std::move(values));
}

void wait_ready(int fd, short events, std::chrono::milliseconds timeout) {
    pollfd p{fd, events, 0};
    for (;;) {
        const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r > 0) return;
        if (r == 0) throw IoError("denoiser timed out");
        if (errno != EINTR) throw IoError(std::string("poll: ") + std::strerror(errno));
    }
}

void write_all(int fd, const std::uint8_t* data, std::size_t n, std::chrono::milliseconds timeout) {
    while (n > 0) {
        wait_ready(fd, POLLOUT, timeout);
        const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        ssize_t written = w;
        if (w < 0 && errno == ENOTSOCK) written = ::write(fd, data, n);
        if (written < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw IoError(std::string("denoiser write: ") + std::strerror(errno));
        }
        data += written;
        n -= static_cast<std::size_t>(written);
    }
}

// Returns bytes read before EOF.
std::size_t read_all(int fd, std::uint8_t* data, std::size_t n, std::chrono::milliseconds timeout) {
    std::size_t got = 0;
    while (got < n) {
        wait_ready(fd, POLLIN, timeout);
        const ssize_t r = ::read(fd, data + got, n - got);
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw IoError(std::string("denoiser read: ") + std::strerror(errno));
        }
        if (r == 0) break;
        got += static_cast<std::size_t>(r);
    }
    return got;
}

/// Owning file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }
    int get() const noexcept { return fd_; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

class StreamDenoiser : public Denoiser {
public:
    LatentVideo denoise(const LatentVideo& z_t, int t) override {
        write_frame(write_fd(), encode_request(z_t, t), timeout_);
        auto body = read_frame(read_fd(), timeout_);
        if (!body) throw IoError("denoiser closed the connection");
        LatentVideo out = decode_response(*body);
        require_same_shape(out, z_t, "denoiser response");
        return out;
    }

protected:
    explicit StreamDenoiser(std::chrono::milliseconds timeout) : timeout_(timeout) {}
    virtual int write_fd() const = 0;
    virtual int read_fd() const = 0;

private:
    std::chrono::milliseconds timeout_;
};

class TcpDenoiser final : public StreamDenoiser {
public:
    TcpDenoiser(const std::string& host, const std::string& port, std::chrono::milliseconds timeout)
        : StreamDenoiser(timeout) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
            throw IoError("cannot resolve " + host + ": " + ::gai_strerror(rc));
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            Fd s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
            if (s.get() < 0) continue;
            if (::connect(s.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
                sock_ = std::move(s);
                return;
            }
        }
        throw IoError("cannot connect to denoiser at " + host + ":" + port);
    }

private:
    int write_fd() const override { return sock_.get(); }
    int read_fd() const override { return sock_.get(); }
    Fd sock_;
};

class ProcessDenoiser final : public StreamDenoiser {
public:
    ProcessDenoiser(const std::string& command, std::chrono::milliseconds timeout) : StreamDenoiser(timeout) {
        int sv[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
            throw IoError(std::string("socketpair: ") + std::strerror(errno));
        Fd parent(sv[0]), child(sv[1]);
        pid_ = ::fork();
        if (pid_ < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
        if (pid_ == 0) {
            ::dup2(child.get(), STDIN_FILENO);
            ::dup2(child.get(), STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        sock_ = std::move(parent);
    }
    ~ProcessDenoiser() override {
        // Closing our end delivers EOF; the child is expected to exit.
        sock_.reset();
        int status = 0;
        for (int i = 0; i < 200; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
            ::usleep(10000);
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
    }

private:
    int write_fd() const override { return sock_.get(); }
    int read_fd() const override { return sock_.get(); }
    Fd sock_;
    pid_t pid_ = -1;
};

}  // namespace

std::vector<std::uint8_t> encode_request(const LatentVideo& z, int t) {
    std::vector<std::uint8_t> out;
    out.reserve(20 + z.size() * sizeof(float));
    put_i32(out, t);
    put_latent(out, z);
    return out;
}

std::pair<LatentVideo, int> decode_request(std::span<const std::uint8_t> body) {
    std::size_t off = 0;
    const int t = get_i32(body, off);
    LatentVideo z = get_latent(body, off);
    return {std::move(z), t};
}

std::vector<std::uint8_t> encode_response(const LatentVideo& z) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + z.size() * sizeof(float));
    put_latent(out, z);
    return out;
}

LatentVideo decode_response(std::span<const std::uint8_t> body) {
    std::size_t off = 0;
    return get_latent(body, off);
}

void write_frame(int fd, std::span<const std::uint8_t> body, std::chrono::milliseconds timeout) {
    if (body.size() > kMaxFrame) throw IoError("denoiser message too large");
    const auto len = static_cast<std::uint32_t>(body.size());
    write_all(fd, reinterpret_cast<const std::uint8_t*>(&len), 4, timeout);
    write_all(fd, body.data(), body.size(), timeout);
}

std::optional<std::vector<std::uint8_t>> read_frame(int fd, std::chrono::milliseconds timeout) {
    std::uint32_t len = 0;
    const std::size_t got = read_all(fd, reinterpret_cast<std::uint8_t*>(&len), 4, timeout);
    if (got == 0) return std::nullopt;
    if (got < 4) throw IoError("denoiser message truncated");
    if (len > kMaxFrame) throw IoError("denoiser message too large");
    std::vector<std::uint8_t> body(len);
    if (read_all(fd, body.data(), len, timeout) != len) throw IoError("denoiser message truncated");
    return body;
}

void serve_denoiser(int in_fd, int out_fd, Denoiser& denoiser, std::chrono::milliseconds timeout) {
    while (auto body = read_frame(in_fd, timeout)) {
        auto [z, t] = decode_request(*body);
        write_frame(out_fd, encode_response(denoiser.denoise(z, t)), timeout);
    }
}

std::unique_ptr<Denoiser> make_denoiser(const std::string& endpoint, std::chrono::milliseconds timeout,
                                        const EchoContext* echo) {
    if (endpoint == "mock:identity") return std::make_unique<IdentityDenoiser>();
    if (endpoint == "mock:echo") {
        if (!echo) throw ValidationError("denoiser_endpoint", "mock:echo needs the guidance latents");
        return std::make_unique<GuidanceEchoDenoiser>(echo->guidance, echo->schedule, echo->seed);
    }
    if (endpoint.starts_with("tcp://")) {
        const std::string rest = endpoint.substr(6);
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size())
            throw ValidationError("denoiser_endpoint", "expected tcp://host:port");
        std::string host = rest.substr(0, colon);
        if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
        return std::make_unique<TcpDenoiser>(host, rest.substr(colon + 1), timeout);
    }
    if (endpoint.starts_with("exec:")) {
        const std::string cmd = endpoint.substr(5);
        if (cmd.empty()) throw ValidationError("denoiser_endpoint", "exec: needs a command");
        return std::make_unique<ProcessDenoiser>(cmd, timeout);
    }
    throw ValidationError("denoiser_endpoint", "unknown endpoint '" + endpoint + "'");
}

}  // namespace imdyn
