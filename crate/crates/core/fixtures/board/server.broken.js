console.error('missing config: BOARD_STORE');
process.exit(1);
