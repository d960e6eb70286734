#include "voxsim/transport.hpp"
#include "voxsim/util.hpp"

#include <chrono>

namespace voxsim {

namespace {

void put_varint(std::vector<unsigned char>& buf, uint32_t v) {
    while (v >= 0x80) {
        buf.push_back(static_cast<unsigned char>(v) | 0x80);
        v >>= 7;
    }
    buf.push_back(static_cast<unsigned char>(v));
}

uint32_t get_varint(const std::vector<unsigned char>& buf, size_t& off) {
    uint32_t v = 0;
    int shift = 0;
    for (;;) {
        if (off >= buf.size()) throw SimError("truncated spike batch payload");
        unsigned char b = buf[off++];
        v |= static_cast<uint32_t>(b & 0x7f) << shift;
        if (!(b & 0x80)) return v;
        shift += 7;
        if (shift > 28) throw SimError("overlong varint in spike batch");
    }
}

} // namespace

std::vector<unsigned char> encode_batch(uint32_t step, uint16_t src, uint16_t dst,
                                        const std::vector<uint32_t>& ids) {
    std::vector<unsigned char> buf;
    buf.reserve(kBatchHeaderBytes + ids.size() * 2);
    put_le<uint32_t>(buf, step);
    put_le<uint16_t>(buf, src);
    put_le<uint16_t>(buf, dst);
    put_le<uint32_t>(buf, static_cast<uint32_t>(ids.size()));
    uint32_t prev = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i == 0) {
            put_varint(buf, ids[0]);
        } else {
            if (ids[i] <= prev)
                throw SimError("spike batch ids must be strictly ascending");
            put_varint(buf, ids[i] - prev);
        }
        prev = ids[i];
    }
    return buf;
}

DecodedBatch decode_batch(const std::vector<unsigned char>& wire) {
    if (wire.size() < kBatchHeaderBytes)
        throw SimError("spike batch shorter than its header");
    DecodedBatch b;
    b.step = get_le<uint32_t>(wire.data());
    b.src = get_le<uint16_t>(wire.data() + 4);
    b.dst = get_le<uint16_t>(wire.data() + 6);
    uint32_t count = get_le<uint32_t>(wire.data() + 8);
    size_t off = kBatchHeaderBytes;
    b.ids.reserve(count);
    uint32_t prev = 0;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t d = get_varint(wire, off);
        prev = (i == 0) ? d : prev + d;
        if (i > 0 && d == 0)
            throw SimError("zero delta in spike batch (ids not ascending)");
        b.ids.push_back(prev);
    }
    if (off != wire.size()) throw SimError("trailing bytes in spike batch");
    return b;
}

QueueTransport::QueueTransport(uint16_t workers) {
    boxes_.reserve(workers);
    for (uint16_t i = 0; i < workers; ++i)
        boxes_.push_back(std::make_unique<Mailbox>());
}

void QueueTransport::send(uint16_t src, uint16_t dst,
                          std::vector<unsigned char> bytes) {
    if (dst >= boxes_.size()) throw SimError("transport: destination out of range");
    Mailbox& box = *boxes_[dst];
    {
        std::lock_guard<std::mutex> lock(box.mu);
        box.q.emplace_back(src, std::move(bytes));
    }
    box.cv.notify_one();
}

bool QueueTransport::recv(uint16_t dst, std::vector<unsigned char>& out,
                          uint16_t& src, int timeout_ms) {
    if (dst >= boxes_.size()) throw SimError("transport: destination out of range");
    Mailbox& box = *boxes_[dst];
    std::unique_lock<std::mutex> lock(box.mu);
    auto ready = [&] { return !box.q.empty(); };
    if (timeout_ms <= 0) {
        box.cv.wait(lock, ready);
    } else if (!box.cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                                ready)) {
        return false;
    }
    src = box.q.front().first;
    out = std::move(box.q.front().second);
    box.q.pop_front();
    return true;
}

bool QueueTransport::try_recv(uint16_t dst, std::vector<unsigned char>& out,
                              uint16_t& src) {
    if (dst >= boxes_.size()) throw SimError("transport: destination out of range");
    Mailbox& box = *boxes_[dst];
    std::lock_guard<std::mutex> lock(box.mu);
    if (box.q.empty()) return false;
    src = box.q.front().first;
    out = std::move(box.q.front().second);
    box.q.pop_front();
    return true;
}

std::shared_ptr<Transport> make_transport(const std::string& kind,
                                          uint16_t workers) {
    if (kind == "queue") return std::make_shared<QueueTransport>(workers);
    throw ConfigError("unknown transport: " + kind);
}

} // namespace voxsim
