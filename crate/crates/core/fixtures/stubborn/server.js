const http = require('http');

// Ignores polite termination so shutdown handling has to escalate.
process.on('SIGTERM', () => {});
process.on('SIGINT', () => {});

http
  .createServer((req, res) => {
    res.writeHead(200, { 'Content-Type': 'text/html' });
    res.end('<!doctype html><html><head><title>Stubborn</title></head><body><h1>Still here</h1></body></html>');
  })
  .listen(process.env.PORT || 3000);
