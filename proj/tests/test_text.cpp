#include <gtest/gtest.h>

#include "ammrg/text.hpp"

using namespace ammrg::text;

TEST(TokenizeTest, LowercasesAndStripsPunctuation) {
    EXPECT_EQ(tokenize("The heart, is ENLARGED."), (std::vector<std::string>{"the", "heart", "is", "enlarged"}));
    EXPECT_EQ(tokenize("  a\tb\nc  "), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(tokenize("left-sided"), (std::vector<std::string>{"leftsided"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_TRUE(tokenize(" .,; ").empty());
}

TEST(SplitSentencesTest, TrimsAndTerminates) {
    EXPECT_EQ(split_sentences("a b. c d.  e"), (std::vector<std::string>{"a b.", "c d.", "e."}));
    EXPECT_EQ(split_sentences(" one .. two."), (std::vector<std::string>{"one.", "two."}));
    EXPECT_TRUE(split_sentences("   ").empty());
}

TEST(JoinTest, Separators) {
    EXPECT_EQ(join({"a", "b", "c"}, " "), "a b c");
    EXPECT_EQ(join({"a"}, ", "), "a");
    EXPECT_EQ(join({}, " "), "");
}
