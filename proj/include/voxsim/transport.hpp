#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace voxsim {

// Spike batch wire format:
//   header: step u32 | src u16 | dst u16 | count u32   (12 bytes, LE)
//   payload: count varints — first neuron id, then successive deltas
// Ids must be strictly ascending. Empty batches (count 0) still travel: they
// carry the step barrier.
inline constexpr size_t kBatchHeaderBytes = 12;

std::vector<unsigned char> encode_batch(uint32_t step, uint16_t src, uint16_t dst,
                                        const std::vector<uint32_t>& ids);

struct DecodedBatch {
    uint32_t step = 0;
    uint16_t src = 0;
    uint16_t dst = 0;
    std::vector<uint32_t> ids;
};
DecodedBatch decode_batch(const std::vector<unsigned char>& wire);

// Point-to-point ordered byte transport between workers in one process.
// Messages on one (src, dst) channel arrive in send order; no global order.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(uint16_t src, uint16_t dst,
                      std::vector<unsigned char> bytes) = 0;
    // Blocks until a message for `dst` arrives or timeout_ms elapses; returns
    // false on timeout. timeout_ms <= 0 waits forever.
    virtual bool recv(uint16_t dst, std::vector<unsigned char>& out,
                      uint16_t& src, int timeout_ms) = 0;
    // Nonblocking variant used by the loopback scheduler.
    virtual bool try_recv(uint16_t dst, std::vector<unsigned char>& out,
                          uint16_t& src) = 0;
};

// Mutex+condvar mailbox per destination.
class QueueTransport : public Transport {
public:
    explicit QueueTransport(uint16_t workers);
    void send(uint16_t src, uint16_t dst, std::vector<unsigned char> bytes) override;
    bool recv(uint16_t dst, std::vector<unsigned char>& out, uint16_t& src,
              int timeout_ms) override;
    bool try_recv(uint16_t dst, std::vector<unsigned char>& out,
                  uint16_t& src) override;

private:
    struct Mailbox {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::pair<uint16_t, std::vector<unsigned char>>> q;
    };
    std::vector<std::unique_ptr<Mailbox>> boxes_;
};

std::shared_ptr<Transport> make_transport(const std::string& kind, uint16_t workers);

} // namespace voxsim
