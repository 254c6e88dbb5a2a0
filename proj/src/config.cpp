/// @file config.cpp
