#include <gtest/gtest.h>

#include "ammrg/binary_io.hpp"
#include "ammrg/errors.hpp"
#include "support/test_support.hpp"

using namespace ammrg;

TEST(BinaryIoTest, LittleEndianLayout) {
    io::ByteWriter w;
    w.u16(0x0102);
    w.u32(0x03040506);
    const auto& b = w.buffer();
    ASSERT_EQ(b.size(), 6u);
    EXPECT_EQ(b[0], 0x02);
    EXPECT_EQ(b[1], 0x01);
    EXPECT_EQ(b[2], 0x06);
    EXPECT_EQ(b[5], 0x03);
}

TEST(BinaryIoTest, RoundTripsEveryType) {
    io::ByteWriter w;
    w.bytes("MAGIC");
    w.u8(7);
    w.u16(65535);
    w.u32(123456789);
    w.u64(0x0123456789abcdefULL);
    w.f32(1.5f);
    w.f64(-2.25);
    w.str("héllo");

    io::ByteReader r(w.buffer());
    EXPECT_EQ(r.bytes(5), "MAGIC");
    EXPECT_EQ(r.u8(), 7);
    EXPECT_EQ(r.u16(), 65535);
    EXPECT_EQ(r.u32(), 123456789u);
    EXPECT_EQ(r.u64(), 0x0123456789abcdefULL);
    EXPECT_EQ(r.f32(), 1.5f);
    EXPECT_EQ(r.f64(), -2.25);
    EXPECT_EQ(r.str(), "héllo");
    EXPECT_EQ(r.remaining(), 0u);
}

TEST(BinaryIoTest, TruncationReportsOffset) {
    io::ByteWriter w;
    w.u32(1);
    io::ByteReader r(w.buffer());
    r.u16();
    try {
        r.u32();
        FAIL() << "expected TruncationError";
    } catch (const TruncationError& e) {
        EXPECT_EQ(e.offset(), 2u);
    }
}

TEST(BinaryIoTest, StringLengthBeyondPayload) {
    io::ByteWriter w;
    w.u32(100);
    w.bytes("abc");
    io::ByteReader r(w.buffer());
    EXPECT_THROW(r.str(), TruncationError);
}

TEST(BinaryIoTest, FileRoundTrip) {
    testing_support::TempDir dir("io");
    const std::vector<std::uint8_t> data{1, 2, 3, 250};
    io::write_file(dir / "x.bin", data);
    EXPECT_EQ(io::read_file(dir / "x.bin"), data);
    EXPECT_THROW(io::read_file(dir / "missing.bin"), Error);
}
