/// @file checks.cpp
