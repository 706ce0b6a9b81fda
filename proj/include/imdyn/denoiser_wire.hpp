#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imdyn/refine.hpp"

namespace imdyn {

// Every message is a little-endian uint32 byte count followed by the body.
//   request body:  int32 t, int32 shape[4], float32 payload[prod(shape)]
//   response body: int32 shape[4], float32 payload[prod(shape)]

std::vector<std::uint8_t> encode_request(const LatentVideo& z, int t);
std::pair<LatentVideo, int> decode_request(std::span<const std::uint8_t> body);
std::vector<std::uint8_t> encode_response(const LatentVideo& z);
LatentVideo decode_response(std::span<const std::uint8_t> body);

/// Blocking framed I/O on a file descriptor. `timeout` bounds each wait for
/// readiness; expiry throws IoError. read_frame returns nullopt on clean EOF
/// before the first byte.
void write_frame(int fd, std::span<const std::uint8_t> body, std::chrono::milliseconds timeout);
std::optional<std::vector<std::uint8_t>> read_frame(int fd, std::chrono::milliseconds timeout);

/// Answers requests on (in_fd, out_fd) with `denoiser` until EOF.
void serve_denoiser(int in_fd, int out_fd, Denoiser& denoiser,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds{60000});

/// Context needed by the guidance-echo mock.
struct EchoContext {
    LatentVideo guidance;
    NoiseSchedule schedule = NoiseSchedule::linear();
    std::uint64_t seed = 0;
};

/// Endpoint forms:
///   mock:identity        in-process identity denoiser
///   mock:echo            in-process guidance echo (needs `echo`)
///   tcp://host:port      persistent TCP connection
///   exec:<command>       child process speaking the protocol on stdin/stdout
std::unique_ptr<Denoiser> make_denoiser(const std::string& endpoint,
                                        std::chrono::milliseconds timeout = std::chrono::milliseconds{60000},
                                        const EchoContext* echo = nullptr);

}  // namespace imdyn
