#pragma once

#include <gtest/gtest.h>

#include "bdsde/error.hpp"

// Expects `stmt` to throw bdsde::Error of the given kind.
#define EXPECT_BDSDE_ERROR(stmt, error_kind)                                              \
    do {                                                                                  \
        bool thrown_ = false;                                                             \
        try {                                                                             \
            stmt;                                                                         \
        } catch (const ::bdsde::Error& e_) {                                              \
            thrown_ = true;                                                               \
            EXPECT_EQ(e_.kind(), error_kind) << e_.what();                                \
        }                                                                                 \
        EXPECT_TRUE(thrown_) << "expected " << ::bdsde::to_string(error_kind) << " error"; \
    } while (0)
