#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <variant>
#include <vector>

#include "privdfs/tensor.hpp"

namespace privdfs {

// Binary protocol, little-endian throughout. Frame layout:
//   magic "PDFS" (4) | version (1) | msg_type (1) | body_len (4, LE) | body
// Full byte layout in docs/protocol.md.

constexpr char kWireMagic[4] = {'P', 'D', 'F', 'S'};
constexpr std::uint8_t kWireVersion = 1;

enum MsgType : std::uint8_t {
    kMsgHello = 0x01,
    kMsgInferReq = 0x02,
    kMsgInferResp = 0x03,
    kMsgErr = 0x7F,
};

enum class WireError : int {
    Ok = 0,
    BadMagic = 1,
    UnknownVersion = 2,
    UnknownType = 3,
    Truncated = 4,
    Oversize = 5,
    BodyMismatch = 6,
};

// ERR frame codes sent on the wire.
enum ErrCode : std::uint16_t {
    kErrBadMagic = 1,
    kErrUnknownVersion = 2,
    kErrUnknownType = 3,
    kErrTruncated = 4,
    kErrOversize = 5,
    kErrBodyMismatch = 6,
    kErrBadRequest = 7,
};

struct HelloMsg {
    std::uint64_t server_id = 0;
    std::uint8_t branch_id = 0;
};

struct InferReqMsg {
    std::uint64_t request_id = 0;
    std::uint32_t policy_id = 0;
    std::uint8_t branch_id = 0;
    FeatureMap tensor;
};

struct InferRespMsg {
    std::uint64_t request_id = 0;
    std::vector<float> embedding;
};

struct ErrMsg {
    std::uint16_t code = 0;
    std::string message;
};

using WireMessage = std::variant<HelloMsg, InferReqMsg, InferRespMsg, ErrMsg>;

namespace wire_detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32(std::vector<std::uint8_t>& b, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(b, u);
}

struct Reader {
    const std::uint8_t* p;
    std::size_t len;
    std::size_t pos = 0;
    bool ok = true;

    bool need(std::size_t n) {
        if (pos + n > len) {
            ok = false;
            return false;
        }
        return true;
    }
    std::uint8_t u8() {
        if (!need(1)) return 0;
        return p[pos++];
    }
    std::uint16_t u16() {
        if (!need(2)) return 0;
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        if (!need(4)) return 0;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        if (!need(8)) return 0;
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t u = u32();
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    }
};

}  // namespace wire_detail

inline std::vector<std::uint8_t> encode_message(const WireMessage& msg) {
    using namespace wire_detail;
    std::vector<std::uint8_t> body;
    std::uint8_t type = 0;
    if (const auto* h = std::get_if<HelloMsg>(&msg)) {
        type = kMsgHello;
        put_u64(body, h->server_id);
        body.push_back(h->branch_id);
    } else if (const auto* r = std::get_if<InferReqMsg>(&msg)) {
        type = kMsgInferReq;
        put_u64(body, r->request_id);
        put_u32(body, r->policy_id);
        body.push_back(r->branch_id);
        body.push_back(3);  // ndims
        put_u32(body, static_cast<std::uint32_t>(r->tensor.channels));
        put_u32(body, static_cast<std::uint32_t>(r->tensor.height));
        put_u32(body, static_cast<std::uint32_t>(r->tensor.width));
        for (float f : r->tensor.data) put_f32(body, f);
    } else if (const auto* p = std::get_if<InferRespMsg>(&msg)) {
        type = kMsgInferResp;
        put_u64(body, p->request_id);
        put_u32(body, static_cast<std::uint32_t>(p->embedding.size()));
        for (float f : p->embedding) put_f32(body, f);
    } else if (const auto* e = std::get_if<ErrMsg>(&msg)) {
        type = kMsgErr;
        put_u16(body, e->code);
        body.insert(body.end(), e->message.begin(), e->message.end());
    }
    std::vector<std::uint8_t> frame;
    frame.reserve(10 + body.size());
    frame.insert(frame.end(), kWireMagic, kWireMagic + 4);
    frame.push_back(kWireVersion);
    frame.push_back(type);
    put_u32(frame, static_cast<std::uint32_t>(body.size()));
    frame.insert(frame.end(), body.begin(), body.end());
    return frame;
}

// Decodes one complete frame. max_tensor_values bounds INFER_REQ payloads.
inline WireError decode_message(const std::uint8_t* data, std::size_t len,
                                WireMessage& out,
                                std::size_t max_tensor_values = 1u << 22) {
    using namespace wire_detail;
    if (len < 10) return WireError::Truncated;
    if (std::memcmp(data, kWireMagic, 4) != 0) return WireError::BadMagic;
    if (data[4] != kWireVersion) return WireError::UnknownVersion;
    const std::uint8_t type = data[5];
    std::uint32_t body_len = 0;
    for (int i = 0; i < 4; ++i)
        body_len |= static_cast<std::uint32_t>(data[6 + i]) << (8 * i);
    if (len < 10 + static_cast<std::size_t>(body_len)) return WireError::Truncated;
    if (len > 10 + static_cast<std::size_t>(body_len)) return WireError::BodyMismatch;

    Reader r{data + 10, body_len};
    switch (type) {
        case kMsgHello: {
            HelloMsg m;
            m.server_id = r.u64();
            m.branch_id = r.u8();
            if (!r.ok || r.pos != r.len) return WireError::Truncated;
            out = m;
            return WireError::Ok;
        }
        case kMsgInferReq: {
            InferReqMsg m;
            m.request_id = r.u64();
            m.policy_id = r.u32();
            m.branch_id = r.u8();
            const std::uint8_t ndims = r.u8();
            if (!r.ok) return WireError::Truncated;
            if (ndims != 3) return WireError::BodyMismatch;
            const std::uint32_t c = r.u32();
            const std::uint32_t h = r.u32();
            const std::uint32_t w = r.u32();
            if (!r.ok) return WireError::Truncated;
            const std::uint64_t count =
                static_cast<std::uint64_t>(c) * h * w;
            if (count > max_tensor_values) return WireError::Oversize;
            if (r.len - r.pos != count * 4) return WireError::Truncated;
            m.tensor = FeatureMap(static_cast<int>(c), static_cast<int>(h),
                                  static_cast<int>(w));
            for (auto& f : m.tensor.data) f = r.f32();
            out = m;
            return WireError::Ok;
        }
        case kMsgInferResp: {
            InferRespMsg m;
            m.request_id = r.u64();
            const std::uint32_t n = r.u32();
            if (!r.ok) return WireError::Truncated;
            if (r.len - r.pos != static_cast<std::size_t>(n) * 4)
                return WireError::Truncated;
            m.embedding.resize(n);
            for (auto& f : m.embedding) f = r.f32();
            out = m;
            return WireError::Ok;
        }
        case kMsgErr: {
            ErrMsg m;
            m.code = r.u16();
            if (!r.ok) return WireError::Truncated;
            m.message.assign(reinterpret_cast<const char*>(r.p + r.pos),
                             r.len - r.pos);
            out = m;
            return WireError::Ok;
        }
        default:
            return WireError::UnknownType;
    }
}

inline const char* wire_error_name(WireError e) {
    switch (e) {
        case WireError::Ok: return "ok";
        case WireError::BadMagic: return "bad magic";
        case WireError::UnknownVersion: return "unknown version";
        case WireError::UnknownType: return "unknown type";
        case WireError::Truncated: return "truncated body";
        case WireError::Oversize: return "oversized tensor";
        case WireError::BodyMismatch: return "body length mismatch";
    }
    return "?";
}

}  // namespace privdfs
